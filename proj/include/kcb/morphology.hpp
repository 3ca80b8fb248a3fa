#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "kcb/error.hpp"
#include "kcb/unicode.hpp"

namespace kcb::morph {

// Coarse part-of-speech categories. NUM and PROPN double as the classes
// assigned to out-of-lexicon tokens.
enum class Pos : std::uint8_t { NOUN, VERB, ADJ, ADV, PREP, PUNCT, NUM, PROPN, OTHER };

inline constexpr std::size_t kPosCount = 9;
inline constexpr std::array<std::string_view, kPosCount> kPosNames = {
    "NOUN", "VERB", "ADJ", "ADV", "PREP", "PUNCT", "NUM", "PROPN", "OTHER"};

inline std::string_view pos_name(Pos p) { return kPosNames[static_cast<std::size_t>(p)]; }

inline std::optional<Pos> parse_pos(std::string_view name) {
    for (std::size_t i = 0; i < kPosCount; ++i)
        if (kPosNames[i] == name) return static_cast<Pos>(i);
    return std::nullopt;
}

inline constexpr std::string_view kFallbackTag = "FALLBACK";

struct MorphAnalysis {
    std::string surface;
    std::string stem;
    std::vector<std::string> affixes;
    Pos pos = Pos::OTHER;
    std::string morph_tag;
    bool is_fallback = false;

    friend bool operator==(const MorphAnalysis&, const MorphAnalysis&) = default;
};

struct AnalyzedText {
    std::vector<MorphAnalysis> words;
    std::string source;

    friend bool operator==(const AnalyzedText&, const AnalyzedText&) = default;
};

// String-to-id table with ids assigned in insertion order starting at
// `first_id`; ids below it are reserved by the caller.
class Vocabulary {
public:
    explicit Vocabulary(std::size_t first_id = 0) : first_id_(first_id) {}

    std::size_t intern(const std::string& key) {
        auto [it, inserted] = ids_.try_emplace(key, first_id_ + keys_.size());
        if (inserted) keys_.push_back(key);
        return it->second;
    }

    std::optional<std::size_t> find(const std::string& key) const {
        auto it = ids_.find(key);
        if (it == ids_.end()) return std::nullopt;
        return it->second;
    }

    bool contains(const std::string& key) const { return ids_.count(key) != 0; }
    const std::string& key(std::size_t id) const { return keys_.at(id - first_id_); }
    const std::vector<std::string>& keys() const { return keys_; }
    std::size_t size() const { return keys_.size(); }
    // One past the largest id, i.e. the embedding table height.
    std::size_t id_space() const { return first_id_ + keys_.size(); }

private:
    std::size_t first_id_;
    std::unordered_map<std::string, std::size_t> ids_;
    std::vector<std::string> keys_;
};

// Stand-in for an external morphological analyzer: surface forms map to
// their analysis. The first entry listed for a surface wins.
class Lexicon {
public:
    // Id 0 of the stem, affix, and tag vocabularies is reserved for MASK.
    static constexpr std::size_t kMaskId = 0;

    struct Entry {
        std::string surface;
        std::string stem;
        std::vector<std::string> affixes;
        Pos pos = Pos::OTHER;
        std::string morph_tag;
    };

    Lexicon() : stems_(1), affixes_(1), tags_(1) {
        tags_.intern(std::string(kFallbackTag));
        pos_set_.insert(Pos::NUM);
        pos_set_.insert(Pos::PROPN);
    }

    // Returns false (and changes nothing) when the surface is already listed.
    bool add(Entry e) {
        if (e.surface.empty()) throw FormatError("lexicon entry with empty surface");
        if (e.stem.empty()) throw FormatError("lexicon entry '" + e.surface + "' has an empty stem");
        if (e.morph_tag.empty()) throw FormatError("lexicon entry '" + e.surface + "' has an empty tag");
        if (index_.count(e.surface)) return false;
        stems_.intern(e.stem);
        for (const auto& a : e.affixes) {
            if (a.empty()) throw FormatError("lexicon entry '" + e.surface + "' has an empty affix");
            affixes_.intern(a);
        }
        tags_.intern(e.morph_tag);
        pos_set_.insert(e.pos);
        index_.emplace(e.surface, entries_.size());
        entries_.push_back(std::move(e));
        return true;
    }

    const Entry* lookup(const std::string& surface) const {
        auto it = index_.find(surface);
        return it == index_.end() ? nullptr : &entries_[it->second];
    }

    const std::vector<Entry>& entries() const { return entries_; }
    const Vocabulary& stems() const { return stems_; }
    const Vocabulary& affixes() const { return affixes_; }
    const Vocabulary& tags() const { return tags_; }
    const std::set<Pos>& pos_set() const { return pos_set_; }

    // surface<TAB>stem<TAB>affix1,affix2<TAB>POS<TAB>TAG, '#' comment lines.
    static Lexicon parse(std::string_view text, const std::string& origin = "<lexicon>") {
        Lexicon lex;
        std::size_t line_no = 0;
        std::istringstream in{std::string(text)};
        std::string line;
        while (std::getline(in, line)) {
            ++line_no;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.empty() || line.front() == '#') continue;
            const auto where = origin + ":" + std::to_string(line_no);
            auto fields = split_tabs(line);
            if (fields.size() != 5) {
                throw FormatError(where + ": expected 5 tab-separated fields, got " + std::to_string(fields.size()));
            }
            Entry e;
            e.surface = unicode::nfc(fields[0]);
            e.stem = unicode::nfc(fields[1]);
            if (!fields[2].empty()) {
                std::size_t start = 0;
                while (true) {
                    auto comma = fields[2].find(',', start);
                    e.affixes.push_back(unicode::nfc(fields[2].substr(start, comma - start)));
                    if (comma == std::string::npos) break;
                    start = comma + 1;
                }
            }
            auto pos = parse_pos(fields[3]);
            if (!pos) throw FormatError(where + ": unknown POS '" + fields[3] + "'");
            e.pos = *pos;
            e.morph_tag = fields[4];
            try {
                lex.add(std::move(e));
            } catch (const FormatError& err) {
                throw FormatError(where + ": " + err.what());
            }
        }
        return lex;
    }

    static Lexicon load(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw FormatError("cannot open lexicon '" + path + "'");
        std::stringstream ss;
        ss << in.rdbuf();
        return parse(ss.str(), path);
    }

    std::string to_text() const {
        std::string out;
        for (const auto& e : entries_) {
            out += e.surface + '\t' + e.stem + '\t';
            for (std::size_t i = 0; i < e.affixes.size(); ++i) out += (i ? "," : "") + e.affixes[i];
            out += '\t';
            out += pos_name(e.pos);
            out += '\t' + e.morph_tag + '\n';
        }
        return out;
    }

private:
    static std::vector<std::string> split_tabs(const std::string& line) {
        std::vector<std::string> out;
        std::size_t start = 0;
        while (true) {
            auto tab = line.find('\t', start);
            out.push_back(line.substr(start, tab - start));
            if (tab == std::string::npos) break;
            start = tab + 1;
        }
        return out;
    }

    Vocabulary stems_;
    Vocabulary affixes_;
    Vocabulary tags_;
    std::set<Pos> pos_set_;
    std::vector<Entry> entries_;
    std::unordered_map<std::string, std::size_t> index_;
};

// Byte-pair encoding over Unicode code points. Unit id 0 is the unknown
// unit; the alphabet follows in sorted order, then one unit per merge.
class BpeModel {
public:
    static constexpr std::size_t kUnknownUnit = 0;
    using Merge = std::pair<std::string, std::string>;

    BpeModel() : units_(1) {}

    BpeModel(std::set<std::string> alphabet, std::vector<Merge> merges)
        : alphabet_(std::move(alphabet)), merges_(std::move(merges)), units_(1) {
        for (const auto& c : alphabet_) units_.intern(c);
        for (const auto& [l, r] : merges_) {
            if (!units_.contains(l) || !units_.contains(r)) {
                throw FormatError("BPE merge (" + l + ", " + r + ") uses a unit not reachable from the alphabet");
            }
            units_.intern(l + r);
        }
    }

    const std::set<std::string>& alphabet() const { return alphabet_; }
    const std::vector<Merge>& merges() const { return merges_; }
    const Vocabulary& units() const { return units_; }

    std::size_t unit_id(const std::string& unit) const { return units_.find(unit).value_or(kUnknownUnit); }

    // "bpe-v1", optional "#alphabet" line of tab-separated code points, then
    // one merge per line as left<TAB>right.
    std::string to_text() const {
        std::string out = "bpe-v1\n#alphabet";
        for (const auto& c : alphabet_) out += '\t' + c;
        out += '\n';
        for (const auto& [l, r] : merges_) out += l + '\t' + r + '\n';
        return out;
    }

    static BpeModel parse(std::string_view text, const std::string& origin = "<bpe>") {
        std::istringstream in{std::string(text)};
        std::string line;
        if (!std::getline(in, line) || (line != "bpe-v1" && line != "bpe-v1\r")) {
            throw FormatError(origin + ": missing 'bpe-v1' header");
        }
        std::set<std::string> alphabet;
        std::vector<Merge> merges;
        std::size_t line_no = 1;
        while (std::getline(in, line)) {
            ++line_no;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.empty()) continue;
            if (line.rfind("#alphabet", 0) == 0) {
                std::size_t start = line.find('\t');
                while (start != std::string::npos) {
                    auto next = line.find('\t', start + 1);
                    alphabet.insert(line.substr(start + 1, next - start - 1));
                    start = next;
                }
                continue;
            }
            if (line.front() == '#') continue;
            auto tab = line.find('\t');
            if (tab == std::string::npos || tab == 0 || tab + 1 == line.size() ||
                line.find('\t', tab + 1) != std::string::npos) {
                throw FormatError(origin + ":" + std::to_string(line_no) + ": expected left<TAB>right");
            }
            merges.emplace_back(line.substr(0, tab), line.substr(tab + 1));
        }
        // Without an explicit alphabet line, every code point named by a
        // merge is taken as a base symbol.
        if (alphabet.empty()) {
            std::set<std::string> produced;
            for (const auto& [l, r] : merges) {
                for (const auto* side : {&l, &r})
                    if (!produced.count(*side))
                        for (auto& cp : unicode::code_points(*side)) alphabet.insert(cp);
                produced.insert(l + r);
            }
        }
        return BpeModel(std::move(alphabet), std::move(merges));
    }

    static BpeModel load(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw FormatError("cannot open BPE model '" + path + "'");
        std::stringstream ss;
        ss << in.rdbuf();
        return parse(ss.str(), path);
    }

private:
    std::set<std::string> alphabet_;
    std::vector<Merge> merges_;
    Vocabulary units_;
};

// Applies every merge rule, in rule order, left to right over the symbols.
// Units always concatenate back to the input.
inline std::vector<std::string> bpe_fallback(std::string_view surface, const BpeModel& bpe) {
    std::vector<std::string> symbols = unicode::code_points(surface);
    for (const auto& [left, right] : bpe.merges()) {
        if (symbols.size() < 2) break;
        std::vector<std::string> next;
        next.reserve(symbols.size());
        for (std::size_t i = 0; i < symbols.size(); ++i) {
            if (i + 1 < symbols.size() && symbols[i] == left && symbols[i + 1] == right) {
                next.push_back(left + right);
                ++i;
            } else {
                next.push_back(std::move(symbols[i]));
            }
        }
        symbols = std::move(next);
    }
    return symbols;
}

// Learns `num_merges` merges from whitespace-separated words. Each round
// merges the most frequent adjacent pair; ties go to the lexicographically
// smallest pair. Stops early when no pair remains.
inline BpeModel train_bpe(const std::vector<std::string>& corpus, std::size_t num_merges) {
    std::map<std::string, std::size_t> word_freq;
    for (const auto& doc : corpus)
        for (auto& w : unicode::split_whitespace(unicode::nfc(doc))) ++word_freq[w];
    if (word_freq.empty()) throw EmptyInput("train_bpe: corpus has no words");

    std::set<std::string> alphabet;
    std::vector<std::pair<std::vector<std::string>, std::size_t>> words;
    for (const auto& [w, f] : word_freq) {
        auto cps = unicode::code_points(w);
        alphabet.insert(cps.begin(), cps.end());
        words.emplace_back(std::move(cps), f);
    }

    std::vector<BpeModel::Merge> merges;
    while (merges.size() < num_merges) {
        std::map<BpeModel::Merge, std::size_t> counts;
        for (const auto& [syms, f] : words)
            for (std::size_t i = 0; i + 1 < syms.size(); ++i) counts[{syms[i], syms[i + 1]}] += f;
        if (counts.empty()) break;
        // std::map iterates pairs in ascending order, so the first maximum
        // is the lexicographic tie-break winner.
        auto best = counts.begin();
        for (auto it = counts.begin(); it != counts.end(); ++it)
            if (it->second > best->second) best = it;
        const auto [left, right] = best->first;
        merges.push_back(best->first);
        for (auto& [syms, f] : words) {
            std::vector<std::string> next;
            next.reserve(syms.size());
            for (std::size_t i = 0; i < syms.size(); ++i) {
                if (i + 1 < syms.size() && syms[i] == left && syms[i + 1] == right) {
                    next.push_back(left + right);
                    ++i;
                } else {
                    next.push_back(std::move(syms[i]));
                }
            }
            syms = std::move(next);
        }
    }
    return BpeModel(std::move(alphabet), std::move(merges));
}

inline bool is_all_digits(std::string_view s) {
    return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

// One analysis per in-lexicon token; out-of-lexicon tokens become fallback
// analyses. All-digit tokens stay whole as a single NUM unit, anything else
// is split by BPE into PROPN units.
inline AnalyzedText analyze(std::string_view text, const Lexicon& lexicon, const BpeModel& bpe) {
    AnalyzedText out;
    out.source = unicode::nfc(text);
    auto tokens = unicode::split_whitespace(out.source);
    if (tokens.empty()) throw EmptyInput("analyze: no tokens after normalization");
    for (auto& tok : tokens) {
        if (const auto* e = lexicon.lookup(tok)) {
            out.words.push_back(MorphAnalysis{tok, e->stem, e->affixes, e->pos, e->morph_tag, false});
            continue;
        }
        if (is_all_digits(tok)) {
            out.words.push_back(MorphAnalysis{tok, tok, {}, Pos::NUM, std::string(kFallbackTag), true});
            continue;
        }
        for (auto& unit : bpe_fallback(tok, bpe))
            out.words.push_back(MorphAnalysis{unit, unit, {}, Pos::PROPN, std::string(kFallbackTag), true});
    }
    return out;
}

struct ScoringFilter {
    std::set<Pos> excluded = {Pos::PREP, Pos::PUNCT};

    void validate(const Lexicon& lexicon) const {
        for (auto p : excluded) {
            if (!lexicon.pos_set().count(p)) {
                throw ConfigError("scoring filter excludes POS " + std::string(pos_name(p)) +
                                  " which the lexicon does not use");
            }
        }
    }

    // Comma-separated POS names; empty string means exclude nothing.
    static ScoringFilter parse(std::string_view names) {
        ScoringFilter f;
        f.excluded.clear();
        std::size_t start = 0;
        while (start < names.size()) {
            auto comma = names.find(',', start);
            auto name = names.substr(start, comma == std::string_view::npos ? names.size() - start : comma - start);
            if (!name.empty()) {
                auto p = parse_pos(name);
                if (!p) throw ConfigError("unknown POS '" + std::string(name) + "' in scoring filter");
                f.excluded.insert(*p);
            }
            if (comma == std::string_view::npos) break;
            start = comma + 1;
        }
        return f;
    }
};

inline bool is_scoring_token(const MorphAnalysis& m, const ScoringFilter& f) { return !f.excluded.count(m.pos); }

}  // namespace kcb::morph
