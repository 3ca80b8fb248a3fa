#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "kcb/error.hpp"
#include "kcb/evaldata.hpp"
#include "kcb/kv_config.hpp"
#include "kcb/morphology.hpp"

namespace kcb::synth {

using eval::QueryRecord;
using index::CorpusRecord;

struct SynthSpec {
    std::size_t stems = 600;
    std::size_t affixes = 40;
    std::size_t morph_tags = 30;
    std::size_t topics = 40;
    std::size_t modules = 8;
    std::size_t words_per_topic = 60;
    std::size_t queries_per_topic = 10;
    std::size_t unique_stems_per_topic = 12;
    std::size_t module_stems = 4;           // shared by all topics of a module
    std::size_t common_stems_per_topic = 3;  // drawn from a pool shared by all topics
    std::size_t prepositions = 10;
    std::size_t forms_per_stem = 6;
    std::size_t max_affixes_per_form = 3;
    std::size_t query_min_words = 4;  // content words per query
    std::size_t query_max_words = 6;
    double distractor_fraction = 0.3;
    double reuse_form_prob = 0.2;  // chance a query word reuses an inflection seen in the gold topic
    double function_word_rate = 0.2;
    double name_prob = 0.2;  // chance a query mentions its topic's proper name
    std::string pos_weights = "NOUN:0.45,VERB:0.3,ADJ:0.15,ADV:0.1";
    std::uint64_t seed = 1;

    template <class Self, class F>
    static void each_field(Self& s, F&& f) {
        f("stems", s.stems);
        f("affixes", s.affixes);
        f("morph_tags", s.morph_tags);
        f("topics", s.topics);
        f("modules", s.modules);
        f("words_per_topic", s.words_per_topic);
        f("queries_per_topic", s.queries_per_topic);
        f("unique_stems_per_topic", s.unique_stems_per_topic);
        f("module_stems", s.module_stems);
        f("common_stems_per_topic", s.common_stems_per_topic);
        f("prepositions", s.prepositions);
        f("forms_per_stem", s.forms_per_stem);
        f("max_affixes_per_form", s.max_affixes_per_form);
        f("query_min_words", s.query_min_words);
        f("query_max_words", s.query_max_words);
        f("distractor_fraction", s.distractor_fraction);
        f("reuse_form_prob", s.reuse_form_prob);
        f("function_word_rate", s.function_word_rate);
        f("name_prob", s.name_prob);
        f("pos_weights", s.pos_weights);
        f("seed", s.seed);
    }

    static SynthSpec from_kv(const KvConfig& kv) {
        SynthSpec s;
        each_field(s, [&](const char* key, auto& v) {
            using V = std::decay_t<decltype(v)>;
            const std::string k = std::string("synth.") + key;
            if constexpr (std::is_same_v<V, std::string>) {
                v = kv.get_string(k, v);
            } else {
                v = kv.get<V>(k, v);
            }
        });
        s.seed = kv.get<std::uint64_t>("synth.seed", kv.get<std::uint64_t>("seed", s.seed));
        return s;
    }

    KvConfig to_kv() const {
        KvConfig kv;
        each_field(*this, [&](const char* key, const auto& v) {
            using V = std::decay_t<decltype(v)>;
            const std::string k = std::string("synth.") + key;
            if constexpr (std::is_same_v<V, std::string>) {
                kv.set(k, v);
            } else if constexpr (std::is_floating_point_v<V>) {
                kv.set(k, enc::EncoderConfig::format_double(v));
            } else {
                kv.set(k, std::to_string(v));
            }
        });
        return kv;
    }

    // Content POS and their relative weights.
    std::vector<std::pair<morph::Pos, double>> parsed_pos_weights() const {
        std::vector<std::pair<morph::Pos, double>> out;
        std::size_t start = 0;
        while (start <= pos_weights.size()) {
            auto comma = pos_weights.find(',', start);
            const auto item = pos_weights.substr(start, comma - start);
            const auto colon = item.find(':');
            if (colon == std::string::npos) throw ConfigError("synth.pos_weights: expected POS:weight, got '" + item + "'");
            auto pos = morph::parse_pos(item.substr(0, colon));
            if (!pos || *pos == morph::Pos::PREP || *pos == morph::Pos::PUNCT || *pos == morph::Pos::NUM ||
                *pos == morph::Pos::PROPN) {
                throw ConfigError("synth.pos_weights: '" + item.substr(0, colon) + "' is not a content POS");
            }
            double w = 0;
            try {
                w = std::stod(item.substr(colon + 1));
            } catch (const std::exception&) {
                throw ConfigError("synth.pos_weights: bad weight in '" + item + "'");
            }
            if (!(w > 0)) throw ConfigError("synth.pos_weights: weights must be positive");
            out.push_back({*pos, w});
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
        return out;
    }

    std::size_t function_stems() const { return prepositions + 3; }

    void validate() const {
        auto fail = [](const std::string& m) { throw ConfigError("synth spec infeasible: " + m); };
        if (topics < 2) fail("need at least 2 topics");
        if (modules < 1 || modules > topics) fail("modules must lie in [1, topics]");
        if (unique_stems_per_topic < 1) fail("unique_stems_per_topic must be >= 1");
        const std::size_t shared = module_stems + common_stems_per_topic;
        if (double(unique_stems_per_topic) < 0.6 * double(unique_stems_per_topic + shared)) {
            fail("unique_stems_per_topic (" + std::to_string(unique_stems_per_topic) +
                 ") is below 60% of the topic's content stems (" + std::to_string(unique_stems_per_topic + shared) + ")");
        }
        const std::size_t demand = function_stems() + topics * unique_stems_per_topic + modules * module_stems +
                                   common_stems_per_topic;
        if (stems < demand) {
            fail("stems (" + std::to_string(stems) + ") < function stems (" + std::to_string(function_stems()) +
                 ") + topics x unique_stems_per_topic (" + std::to_string(topics * unique_stems_per_topic) +
                 ") + modules x module_stems (" + std::to_string(modules * module_stems) +
                 ") + common_stems_per_topic (" + std::to_string(common_stems_per_topic) + ") = " +
                 std::to_string(demand));
        }
        if (prepositions < 1 || prepositions > 50) fail("prepositions must lie in [1, 50]");
        const auto pos = parsed_pos_weights();
        if (morph_tags < pos.size() + 2) {
            fail("morph_tags (" + std::to_string(morph_tags) + ") < content POS count + 2");
        }
        if (affixes < 1 || affixes > 55) fail("affixes must lie in [1, 55]");
        if (forms_per_stem < 1) fail("forms_per_stem must be >= 1");
        if (max_affixes_per_form < 1) fail("max_affixes_per_form must be >= 1");
        if (query_min_words < 1 || query_min_words > query_max_words) fail("query word range is empty");
        if (distractor_fraction < 0 || distractor_fraction >= 1) fail("distractor_fraction must lie in [0, 1)");
        if (words_per_topic < unique_stems_per_topic + shared + words_per_topic / 10 + 3) {
            fail("words_per_topic too small to mention every topic stem");
        }
        for (double p : {reuse_form_prob, function_word_rate, name_prob}) {
            if (p < 0 || p > 1) fail("probabilities must lie in [0, 1]");
        }
    }
};

struct SynthOutput {
    morph::Lexicon lexicon;
    std::vector<CorpusRecord> corpus;
    std::vector<QueryRecord> queries;
};

namespace detail {

struct Form {
    std::string surface;
    std::vector<std::string> affixes;
    std::string tag;
};

struct StemInfo {
    std::string stem;
    morph::Pos pos;
    std::vector<Form> forms;
};

inline std::string pad(std::size_t v, std::size_t width) {
    auto s = std::to_string(v);
    return std::string(s.size() < width ? width - s.size() : 0, '0') + s;
}

}  // namespace detail

inline SynthOutput generate(const SynthSpec& spec) {
    using detail::StemInfo;
    using morph::Pos;
    spec.validate();
    std::mt19937_64 rng(spec.seed);
    auto uniform = [&](std::size_t lo, std::size_t hi) { return std::uniform_int_distribution<std::size_t>(lo, hi)(rng); };
    auto chance = [&](double p) { return std::bernoulli_distribution(p)(rng); };

    const std::string vowels = "aeiou";
    const std::string stem_consonants = "bcdfghjklmnprstvwyz";
    const std::string affix_consonants = "bkmnrtyzgh";

    // Affixes: distinct V / CV strings.
    std::vector<std::string> affix_pool;
    for (char v : vowels) affix_pool.emplace_back(1, v);
    for (char c : affix_consonants)
        for (char v : vowels) affix_pool.push_back(std::string{c, v});
    std::shuffle(affix_pool.begin(), affix_pool.end(), rng);
    affix_pool.resize(spec.affixes);

    // Content stems: distinct CVCV(CV) strings, at least four letters.
    std::set<std::string> stem_strings;
    auto new_stem = [&] {
        while (true) {
            std::string s;
            const std::size_t syllables = uniform(2, 3);
            for (std::size_t i = 0; i < syllables; ++i) {
                s += stem_consonants[uniform(0, stem_consonants.size() - 1)];
                s += vowels[uniform(0, vowels.size() - 1)];
            }
            if (stem_strings.insert(s).second) return s;
        }
    };

    // Tags per content POS, plus one tag each for prepositions and punctuation.
    const auto pos_weights = spec.parsed_pos_weights();
    const std::size_t content_tags = spec.morph_tags - 2;
    std::map<Pos, std::vector<std::string>> tags_of;
    for (std::size_t t = 0; t < content_tags; ++t) {
        const Pos p = pos_weights[t % pos_weights.size()].first;
        tags_of[p].push_back(std::string(morph::pos_name(p)) + std::to_string(tags_of[p].size() + 1));
    }
    std::vector<double> weights;
    for (const auto& [p, w] : pos_weights) weights.push_back(w);
    std::discrete_distribution<std::size_t> pick_pos(weights.begin(), weights.end());

    std::map<std::string, std::pair<std::size_t, std::size_t>> surface_owner;  // surface -> (stem, form)
    std::vector<StemInfo> stems;

    // Function words first: two-letter prepositions and three punctuation marks.
    std::set<std::string> preps;
    while (preps.size() < spec.prepositions) {
        preps.insert(std::string{affix_consonants[uniform(0, affix_consonants.size() - 1)], vowels[uniform(0, 4)]});
    }
    std::vector<std::size_t> prep_ids, punct_ids;
    for (const auto& p : preps) {
        prep_ids.push_back(stems.size());
        stems.push_back({p, Pos::PREP, {{p, {}, "PR"}}});
    }
    for (const char* p : {".", ",", "?"}) {
        punct_ids.push_back(stems.size());
        stems.push_back({p, Pos::PUNCT, {{p, {}, "PU"}}});
    }
    for (const auto& s : stems) surface_owner[s.stem] = {&s - stems.data(), 0};
    const std::size_t first_content = stems.size();

    while (stems.size() < spec.stems) {
        StemInfo info{new_stem(), pos_weights[pick_pos(rng)].first, {}};
        const auto& tags = tags_of[info.pos];
        for (std::size_t f = 0, attempts = 0; f < spec.forms_per_stem && attempts < 50 * spec.forms_per_stem; ++attempts) {
            detail::Form form;
            const std::size_t n_aff = uniform(1, std::min(spec.max_affixes_per_form, affix_pool.size()));
            for (std::size_t a = 0; a < n_aff; ++a) form.affixes.push_back(affix_pool[uniform(0, affix_pool.size() - 1)]);
            for (const auto& a : form.affixes) form.surface += a;
            form.surface += info.stem;
            form.tag = tags[uniform(0, tags.size() - 1)];
            if (surface_owner.count(form.surface)) continue;
            surface_owner[form.surface] = {stems.size(), info.forms.size()};
            info.forms.push_back(std::move(form));
            ++f;
        }
        stems.push_back(std::move(info));
    }

    // Stem roles.
    std::vector<std::size_t> content(stems.size() - first_content);
    for (std::size_t i = 0; i < content.size(); ++i) content[i] = first_content + i;
    std::shuffle(content.begin(), content.end(), rng);
    std::size_t cursor = 0;
    auto take = [&](std::size_t n) {
        std::vector<std::size_t> out(content.begin() + std::ptrdiff_t(cursor), content.begin() + std::ptrdiff_t(cursor + n));
        cursor += n;
        return out;
    };
    std::vector<std::vector<std::size_t>> topic_unique(spec.topics), module_shared(spec.modules);
    for (auto& u : topic_unique) u = take(spec.unique_stems_per_topic);
    for (auto& m : module_shared) m = take(spec.module_stems);
    const std::vector<std::size_t> common_pool(content.begin() + std::ptrdiff_t(cursor), content.end());

    auto module_of = [&](std::size_t t) { return t * spec.modules / spec.topics; };

    // Proper names: capitalized so they never collide with lexicon surfaces.
    std::set<std::string> names;
    std::vector<std::string> topic_name(spec.topics);
    for (auto& n : topic_name) {
        do {
            n = new_stem();
            n[0] = static_cast<char>(n[0] - 'a' + 'A');
        } while (!names.insert(n).second);
    }

    SynthOutput out;
    for (const auto& s : stems) {
        for (const auto& f : s.forms) out.lexicon.add({f.surface, s.stem, f.affixes, s.pos, f.tag});
    }

    // Documents.
    std::vector<std::set<std::size_t>> topic_stems(spec.topics);
    std::vector<std::map<std::size_t, std::set<std::size_t>>> seen_forms(spec.topics);
    for (std::size_t t = 0; t < spec.topics; ++t) {
        std::vector<std::size_t> own = topic_unique[t];
        own.insert(own.end(), module_shared[module_of(t)].begin(), module_shared[module_of(t)].end());
        std::vector<std::size_t> pool = common_pool;
        std::shuffle(pool.begin(), pool.end(), rng);
        own.insert(own.end(), pool.begin(), pool.begin() + std::ptrdiff_t(spec.common_stems_per_topic));
        topic_stems[t] = std::set<std::size_t>(own.begin(), own.end());

        // Slots: every topic stem once, sampled content (unique stems weigh
        // double), prepositions, the topic name and a year; punctuation is
        // inserted afterwards.
        const std::size_t n_punct = std::max<std::size_t>(1, spec.words_per_topic / 10);
        const std::size_t body = spec.words_per_topic - n_punct - 2;
        const std::size_t n_func = std::min(body - own.size(), std::size_t(std::lround(double(body) * spec.function_word_rate)));
        std::vector<std::string> words;
        for (std::size_t i = 0; i < body; ++i) {
            if (i >= body - n_func) {
                words.push_back(stems[prep_ids[uniform(0, prep_ids.size() - 1)]].stem);
                continue;
            }
            std::size_t s;
            if (i < own.size()) {
                s = own[i];
            } else {
                const std::size_t k = uniform(0, own.size() + topic_unique[t].size() - 1);
                s = k < own.size() ? own[k] : topic_unique[t][k - own.size()];
            }
            const auto f = uniform(0, stems[s].forms.size() - 1);
            seen_forms[t][s].insert(f);
            words.push_back(stems[s].forms[f].surface);
        }
        words.push_back(topic_name[t]);
        words.push_back(std::to_string(uniform(1900, 2030)));
        std::shuffle(words.begin(), words.end(), rng);
        for (std::size_t i = 0; i + 1 < n_punct; ++i) {
            words.insert(words.begin() + std::ptrdiff_t(uniform(1, words.size() - 1)), stems[punct_ids[uniform(0, 1)]].stem);
        }
        words.push_back(".");
        std::string text;
        for (const auto& w : words) text += (text.empty() ? "" : " ") + w;
        out.corpus.push_back({"topic-" + detail::pad(t, 3), "module-" + detail::pad(module_of(t), 2), text});
    }

    // Queries.
    for (std::size_t t = 0; t < spec.topics; ++t) {
        std::vector<std::size_t> gold_pool;
        for (auto s : topic_stems[t])
            if (std::find(common_pool.begin(), common_pool.end(), s) == common_pool.end()) gold_pool.push_back(s);
        for (std::size_t qi = 0; qi < spec.queries_per_topic; ++qi) {
            bool done = false;
            for (int attempt = 0; attempt < 200 && !done; ++attempt) {
                const std::size_t n = uniform(spec.query_min_words, spec.query_max_words);
                std::size_t n_distract = std::size_t(std::floor(spec.distractor_fraction * double(n) +
                                                                std::uniform_real_distribution<double>(0, 1)(rng)));
                n_distract = std::min(n_distract, n - std::min<std::size_t>(n, 2));
                const std::size_t n_gold = std::min(n - n_distract, gold_pool.size());
                auto gold = gold_pool;
                std::shuffle(gold.begin(), gold.end(), rng);
                gold.resize(n_gold);
                std::vector<std::size_t> chosen = gold;
                for (std::size_t d = 0; d < n_distract; ++d) {
                    std::size_t other = uniform(0, spec.topics - 2);
                    if (other >= t) ++other;
                    const auto& src = topic_stems[other];
                    auto it = src.begin();
                    std::advance(it, std::ptrdiff_t(uniform(0, src.size() - 1)));
                    chosen.push_back(*it);
                }
                std::set<std::size_t> qset(chosen.begin(), chosen.end());
                std::vector<std::size_t> overlap(spec.topics, 0);
                for (std::size_t o = 0; o < spec.topics; ++o)
                    for (auto s : qset) overlap[o] += topic_stems[o].count(s);
                bool unique_best = true;
                for (std::size_t o = 0; o < spec.topics; ++o)
                    if (o != t && overlap[o] >= overlap[t]) unique_best = false;
                if (!unique_best) continue;

                std::shuffle(chosen.begin(), chosen.end(), rng);
                std::vector<std::string> words;
                for (auto s : chosen) {
                    const auto& seen = seen_forms[t][s];
                    std::vector<std::size_t> fresh;
                    for (std::size_t f = 0; f < stems[s].forms.size(); ++f)
                        if (!seen.count(f)) fresh.push_back(f);
                    std::size_t f;
                    if (!fresh.empty() && !chance(spec.reuse_form_prob)) {
                        f = fresh[uniform(0, fresh.size() - 1)];
                    } else {
                        f = uniform(0, stems[s].forms.size() - 1);
                    }
                    words.push_back(stems[s].forms[f].surface);
                }
                if (chance(0.5)) {
                    words.insert(words.begin() + std::ptrdiff_t(uniform(0, words.size())),
                                 stems[prep_ids[uniform(0, prep_ids.size() - 1)]].stem);
                }
                if (chance(spec.name_prob)) words.insert(words.begin() + std::ptrdiff_t(uniform(0, words.size())), topic_name[t]);
                words.push_back("?");
                std::string text;
                for (const auto& w : words) text += (text.empty() ? "" : " ") + w;
                out.queries.push_back({"q-" + detail::pad(t, 3) + "-" + detail::pad(qi, 2), text, out.corpus[t].doc_id,
                                       eval::Split::TRAIN});
                done = true;
            }
            if (!done) {
                throw ConfigError("synth: could not build a query whose gold topic " + out.corpus[t].doc_id +
                                  " is the unique best stem match; raise unique_stems_per_topic or lower distractor_fraction");
            }
        }
    }
    return out;
}

}  // namespace kcb::synth
