#include <map>
#include <set>

#include <gtest/gtest.h>

#include "kcb/evaldata.hpp"
#include "kcb/synthlang.hpp"

using namespace kcb;
using namespace kcb::synth;

namespace {

const SynthOutput& default_output() {
    static const SynthOutput out = generate(SynthSpec{});
    return out;
}

morph::BpeModel empty_bpe() { return morph::train_bpe({"a"}, 0); }

// Lexicon stems of the content words in a text.
std::set<std::string> content_stems(const std::string& text, const morph::Lexicon& lex) {
    const auto bpe = empty_bpe();
    std::set<std::string> out;
    for (const auto& m : morph::analyze(text, lex, bpe).words) {
        if (m.is_fallback || m.pos == morph::Pos::PREP || m.pos == morph::Pos::PUNCT) continue;
        out.insert(m.stem);
    }
    return out;
}

}  // namespace

TEST(Synth, DefaultShape) {
    const auto& out = default_output();
    SynthSpec spec;
    EXPECT_EQ(out.corpus.size(), spec.topics);
    EXPECT_EQ(out.queries.size(), spec.topics * spec.queries_per_topic);
    EXPECT_EQ(out.lexicon.stems().size(), spec.stems);
    EXPECT_LE(out.lexicon.affixes().size(), spec.affixes);
    EXPECT_GE(out.lexicon.affixes().size(), spec.affixes * 9 / 10);
    EXPECT_EQ(out.lexicon.tags().size(), spec.morph_tags + 1);  // plus the fallback tag
    EXPECT_EQ(out.lexicon.pos_set().size(), 6u + 2u);  // content, PREP, PUNCT, plus NUM and PROPN always present
    std::set<std::string> modules;
    for (const auto& r : out.corpus) {
        modules.insert(r.module_id);
        std::size_t words = 1;
        for (char c : r.text) words += c == ' ';
        EXPECT_EQ(words, spec.words_per_topic) << r.doc_id;
    }
    EXPECT_EQ(modules.size(), spec.modules);
}

TEST(Synth, DeterministicUnderSeed) {
    SynthSpec spec;
    spec.seed = 77;
    const auto a = generate(spec);
    const auto b = generate(spec);
    EXPECT_EQ(a.lexicon.to_text(), b.lexicon.to_text());
    EXPECT_EQ(eval::corpus_to_text(a.corpus), eval::corpus_to_text(b.corpus));
    EXPECT_EQ(eval::queries_to_text(a.queries), eval::queries_to_text(b.queries));
    spec.seed = 78;
    EXPECT_NE(eval::corpus_to_text(generate(spec).corpus), eval::corpus_to_text(a.corpus));
}

TEST(Synth, FilesRoundTripThroughLoaders) {
    const auto& out = default_output();
    auto lex = morph::Lexicon::parse(out.lexicon.to_text());
    EXPECT_EQ(lex.to_text(), out.lexicon.to_text());
    EXPECT_EQ(eval::parse_corpus(eval::corpus_to_text(out.corpus)), out.corpus);
    EXPECT_EQ(eval::parse_queries(eval::queries_to_text(out.queries)), out.queries);
}

TEST(Synth, OnlyNamesAndNumbersFallBack) {
    const auto& out = default_output();
    const auto bpe = empty_bpe();
    for (const auto& r : out.corpus) {
        std::size_t upper = 0, digits = 0;
        for (const auto& tok : unicode::split_whitespace(r.text)) {
            if (out.lexicon.lookup(tok)) continue;
            if (morph::is_all_digits(tok)) {
                ++digits;
            } else {
                ASSERT_TRUE(tok[0] >= 'A' && tok[0] <= 'Z') << tok;
                ++upper;
            }
        }
        EXPECT_EQ(upper, 1u) << r.doc_id;
        EXPECT_EQ(digits, 1u) << r.doc_id;
    }
    // Every lexicon surface analyzes back to its own entry.
    for (const auto& e : out.lexicon.entries()) {
        auto a = morph::analyze(e.surface, out.lexicon, bpe);
        ASSERT_EQ(a.words.size(), 1u);
        EXPECT_EQ(a.words[0].stem, e.stem);
        EXPECT_EQ(a.words[0].affixes, e.affixes);
        EXPECT_FALSE(a.words[0].is_fallback);
        std::string concat;
        for (const auto& x : e.affixes) concat += x;
        if (!e.affixes.empty()) EXPECT_EQ(concat + e.stem, e.surface);
    }
}

TEST(Synth, TopicsAreMostlyUnique) {
    const auto& out = default_output();
    std::vector<std::set<std::string>> stems;
    std::map<std::string, std::size_t> doc_freq;
    for (const auto& r : out.corpus) {
        stems.push_back(content_stems(r.text, out.lexicon));
        for (const auto& s : stems.back()) ++doc_freq[s];
    }
    for (std::size_t t = 0; t < stems.size(); ++t) {
        std::size_t unique = 0;
        for (const auto& s : stems[t]) unique += doc_freq[s] == 1;
        EXPECT_GE(double(unique), 0.6 * double(stems[t].size())) << out.corpus[t].doc_id;
    }
}

TEST(Synth, BagOfStemsOracleSolvesQueries) {
    const auto& out = default_output();
    std::vector<std::set<std::string>> doc_stems;
    for (const auto& r : out.corpus) doc_stems.push_back(content_stems(r.text, out.lexicon));
    std::vector<eval::Ranking> rankings;
    std::vector<std::string> gold;
    for (const auto& q : out.queries) {
        const auto qs = content_stems(q.text, out.lexicon);
        std::vector<std::pair<std::size_t, std::size_t>> scored;  // (-overlap order via sort, index)
        for (std::size_t d = 0; d < doc_stems.size(); ++d) {
            std::size_t overlap = 0;
            for (const auto& s : qs) overlap += doc_stems[d].count(s);
            scored.push_back({overlap, d});
        }
        // Ties rank the gold document last.
        std::stable_sort(scored.begin(), scored.end(), [&](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first > b.first;
            return out.corpus[a.second].doc_id != q.gold_doc_id && out.corpus[b.second].doc_id == q.gold_doc_id;
        });
        eval::Ranking r;
        for (std::size_t i = 0; i < 10; ++i) r.push_back(out.corpus[scored[i].second].doc_id);
        rankings.push_back(r);
        gold.push_back(q.gold_doc_id);
    }
    EXPECT_GE(eval::mrr_at_k(rankings, gold, 10), 0.95);
}

TEST(Synth, QueriesAreMorphologicallyNontrivial) {
    const auto& out = default_output();
    std::map<std::string, const index::CorpusRecord*> docs;
    for (const auto& r : out.corpus) docs[r.doc_id] = &r;
    std::size_t total = 0, novel = 0, distractors = 0;
    for (const auto& q : out.queries) {
        std::map<std::string, std::set<std::string>> surfaces_of_stem;
        for (const auto& tok : unicode::split_whitespace(docs.at(q.gold_doc_id)->text)) {
            if (const auto* e = out.lexicon.lookup(tok)) surfaces_of_stem[e->stem].insert(tok);
        }
        for (const auto& tok : unicode::split_whitespace(q.text)) {
            const auto* e = out.lexicon.lookup(tok);
            if (!e || e->pos == morph::Pos::PREP || e->pos == morph::Pos::PUNCT) continue;
            auto it = surfaces_of_stem.find(e->stem);
            if (it == surfaces_of_stem.end()) {
                ++distractors;
                continue;
            }
            ++total;
            novel += !it->second.count(tok);
        }
    }
    ASSERT_GT(total, 0u);
    EXPECT_GE(double(novel) / double(total), 0.5);
    EXPECT_GT(distractors, 0u);
}

TEST(Synth, InfeasibleSpecsNameTheConstraint) {
    SynthSpec spec;
    spec.stems = 100;
    try {
        generate(spec);
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("stems (100)"), std::string::npos) << e.what();
    }
    spec = {};
    spec.unique_stems_per_topic = 2;
    EXPECT_THROW(generate(spec), ConfigError);
    spec = {};
    spec.morph_tags = 4;
    EXPECT_THROW(generate(spec), ConfigError);
    spec = {};
    spec.pos_weights = "PREP:1";
    EXPECT_THROW(generate(spec), ConfigError);
    spec = {};
    spec.modules = 50;
    EXPECT_THROW(generate(spec), ConfigError);
}

TEST(Synth, SpecKvRoundTrip) {
    SynthSpec spec;
    spec.stems = 700;
    spec.distractor_fraction = 0.25;
    spec.pos_weights = "NOUN:1,VERB:1";
    spec.seed = 9;
    const auto back = SynthSpec::from_kv(KvConfig::parse(spec.to_kv().to_string()));
    EXPECT_EQ(back.to_kv().to_string(), spec.to_kv().to_string());
    EXPECT_EQ(back.stems, 700u);
    EXPECT_EQ(back.seed, 9u);
}
