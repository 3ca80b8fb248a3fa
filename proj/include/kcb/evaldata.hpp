#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <random>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "kcb/binary_io.hpp"
#include "kcb/error.hpp"
#include "kcb/index.hpp"
#include "kcb/kv_config.hpp"
#include "kcb/parallel.hpp"
#include "kcb/training.hpp"

namespace kcb::eval {

using index::CorpusRecord;
using train::Triplet;

enum class Split { TRAIN, DEV, TEST };

inline const char* split_name(Split s) {
    switch (s) {
        case Split::TRAIN: return "train";
        case Split::DEV: return "dev";
        case Split::TEST: return "test";
    }
    return "?";
}

inline Split parse_split(std::string_view s) {
    if (s == "train") return Split::TRAIN;
    if (s == "dev") return Split::DEV;
    if (s == "test") return Split::TEST;
    throw ConfigError("unknown split '" + std::string(s) + "' (expected train, dev or test)");
}

struct QueryRecord {
    std::string query_id;
    std::string text;
    std::string gold_doc_id;
    Split split = Split::TRAIN;

    friend bool operator==(const QueryRecord&, const QueryRecord&) = default;
};

// ---------------------------------------------------------------------------
// Tab-separated files

namespace detail {

inline std::vector<std::vector<std::string>> parse_tsv(std::string_view text, std::size_t fields,
                                                       const std::string& origin) {
    std::vector<std::vector<std::string>> rows;
    std::size_t line_no = 0, pos = 0;
    while (pos < text.size()) {
        auto nl = text.find('\n', pos);
        if (nl == std::string_view::npos) nl = text.size();
        auto line = text.substr(pos, nl - pos);
        pos = nl + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.empty() || line.front() == '#') continue;
        std::vector<std::string> row;
        std::size_t start = 0;
        while (row.size() + 1 < fields) {
            auto tab = line.find('\t', start);
            if (tab == std::string_view::npos) break;
            row.emplace_back(line.substr(start, tab - start));
            start = tab + 1;
        }
        row.emplace_back(line.substr(start));
        if (row.size() != fields) {
            throw FormatError(origin + ":" + std::to_string(line_no) + ": expected " + std::to_string(fields) +
                              " tab-separated fields, got " + std::to_string(row.size()));
        }
        for (std::size_t f = 0; f + 1 < fields; ++f) {
            if (row[f].empty()) throw FormatError(origin + ":" + std::to_string(line_no) + ": empty identifier");
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

inline std::string checked_field(const std::string& s, const char* what) {
    if (s.empty() || s.find_first_of("\t\n") != std::string::npos) {
        throw FormatError(std::string(what) + " '" + s + "' is empty or contains a tab or newline");
    }
    return s;
}

}  // namespace detail

inline std::vector<CorpusRecord> parse_corpus(std::string_view text, const std::string& origin = "<corpus>") {
    std::vector<CorpusRecord> out;
    std::set<std::string> seen;
    for (auto& row : detail::parse_tsv(text, 3, origin)) {
        if (!seen.insert(row[0]).second) throw FormatError(origin + ": duplicate doc_id '" + row[0] + "'");
        out.push_back({row[0], row[1], row[2]});
    }
    return out;
}

inline std::string corpus_to_text(const std::vector<CorpusRecord>& corpus) {
    std::string out;
    for (const auto& r : corpus) {
        out += detail::checked_field(r.doc_id, "doc_id") + "\t" + detail::checked_field(r.module_id, "module_id") +
               "\t" + r.text + "\n";
    }
    return out;
}

inline std::vector<QueryRecord> parse_queries(std::string_view text, const std::string& origin = "<queries>") {
    std::vector<QueryRecord> out;
    std::set<std::string> seen;
    for (auto& row : detail::parse_tsv(text, 3, origin)) {
        if (!seen.insert(row[0]).second) throw FormatError(origin + ": duplicate query_id '" + row[0] + "'");
        out.push_back({row[0], row[2], row[1], Split::TRAIN});
    }
    return out;
}

inline std::string queries_to_text(const std::vector<QueryRecord>& queries) {
    std::string out;
    for (const auto& q : queries) {
        out += detail::checked_field(q.query_id, "query_id") + "\t" +
               detail::checked_field(q.gold_doc_id, "gold_doc_id") + "\t" + q.text + "\n";
    }
    return out;
}

inline std::vector<Triplet> parse_triplets(std::string_view text, const std::string& origin = "<triplets>") {
    std::vector<Triplet> out;
    for (auto& row : detail::parse_tsv(text, 3, origin)) {
        if (row[2].empty()) throw FormatError(origin + ": empty negative id");
        out.push_back({row[0], row[1], row[2]});
    }
    return out;
}

inline std::string triplets_to_text(const std::vector<Triplet>& triplets) {
    std::string out;
    for (const auto& t : triplets) out += t.query_id + "\t" + t.positive_id + "\t" + t.negative_id + "\n";
    return out;
}

inline std::string read_text_file(const std::string& path) { return ByteReader::slurp(path); }

inline void write_text_file(const std::string& path, const std::string& text) {
    ByteWriter w;
    w.bytes(text);
    w.write_file(path);
}

inline std::vector<CorpusRecord> load_corpus(const std::string& path) { return parse_corpus(read_text_file(path), path); }
inline std::vector<QueryRecord> load_queries(const std::string& path) {
    return parse_queries(read_text_file(path), path);
}
inline std::vector<Triplet> load_triplets(const std::string& path) { return parse_triplets(read_text_file(path), path); }

// ---------------------------------------------------------------------------
// Splits and triplets

struct SplitRatios {
    double train = 0.6;
    double dev = 0.2;
    double test = 0.2;
};

// Assigns whole topics to splits; each query follows its gold topic. Topic
// counts use largest-remainder rounding, and every split with a positive
// ratio receives at least one topic.
inline std::vector<QueryRecord> split_queries(std::vector<QueryRecord> queries, const SplitRatios& ratios,
                                              std::uint64_t seed) {
    const double r[3] = {ratios.train, ratios.dev, ratios.test};
    for (double x : r)
        if (x < 0.0) throw ConfigError("split ratios must be non-negative");
    if (std::abs(r[0] + r[1] + r[2] - 1.0) > 1e-9) throw ConfigError("split ratios must sum to 1");
    std::vector<std::string> topics;
    std::set<std::string> seen;
    for (const auto& q : queries)
        if (seen.insert(q.gold_doc_id).second) topics.push_back(q.gold_doc_id);
    std::sort(topics.begin(), topics.end());
    const std::size_t n = topics.size();
    const std::size_t wanted = std::size_t(r[0] > 0) + std::size_t(r[1] > 0) + std::size_t(r[2] > 0);
    if (n < wanted) {
        throw ConfigError("split_queries: " + std::to_string(n) + " topics cannot fill " + std::to_string(wanted) +
                          " non-empty splits");
    }
    std::size_t count[3];
    std::size_t assigned = 0;
    std::vector<std::pair<double, std::size_t>> remainders;
    for (std::size_t s = 0; s < 3; ++s) {
        const double exact = r[s] * double(n);
        count[s] = static_cast<std::size_t>(std::floor(exact));
        assigned += count[s];
        remainders.push_back({exact - double(count[s]), s});
    }
    std::stable_sort(remainders.begin(), remainders.end(), [](auto& a, auto& b) { return a.first > b.first; });
    for (std::size_t i = 0; assigned < n; ++i, ++assigned) ++count[remainders[i % 3].second];
    for (std::size_t s = 0; s < 3; ++s) {
        if (r[s] > 0 && count[s] == 0) {
            auto largest = std::size_t(std::max_element(count, count + 3) - count);
            --count[largest];
            ++count[s];
        }
    }
    std::mt19937_64 rng(seed);
    std::shuffle(topics.begin(), topics.end(), rng);
    std::map<std::string, Split> topic_split;
    for (std::size_t i = 0; i < n; ++i) {
        topic_split[topics[i]] = i < count[0] ? Split::TRAIN : i < count[0] + count[1] ? Split::DEV : Split::TEST;
    }
    for (auto& q : queries) q.split = topic_split.at(q.gold_doc_id);
    return queries;
}

inline std::vector<QueryRecord> queries_in(const std::vector<QueryRecord>& queries, Split split) {
    std::vector<QueryRecord> out;
    for (const auto& q : queries)
        if (q.split == split) out.push_back(q);
    return out;
}

// For each query: one triplet per negative, where the negatives are every
// other topic of the gold topic's module plus a uniform sample without
// replacement of up to `random_negatives` topics from the other modules.
// `topics` lists (doc_id, module_id) in corpus order.
inline std::vector<Triplet> build_triplets(const std::vector<QueryRecord>& queries,
                                           const std::vector<std::pair<std::string, std::string>>& topics,
                                           std::uint64_t seed, std::size_t random_negatives = 100) {
    if (topics.size() < 2) throw ConfigError("build_triplets: need at least 2 topics, got " + std::to_string(topics.size()));
    std::map<std::string, std::string> module_of;
    for (const auto& [doc, module] : topics) {
        if (!module_of.emplace(doc, module).second) throw FormatError("build_triplets: duplicate topic '" + doc + "'");
    }
    std::mt19937_64 rng(seed);
    std::vector<Triplet> out;
    for (const auto& q : queries) {
        auto it = module_of.find(q.gold_doc_id);
        if (it == module_of.end()) {
            throw FormatError("query '" + q.query_id + "': gold topic '" + q.gold_doc_id + "' is not in the corpus");
        }
        std::vector<std::string> others;
        for (const auto& [doc, module] : topics) {
            if (doc == q.gold_doc_id) continue;
            if (module == it->second) {
                out.push_back({q.query_id, q.gold_doc_id, doc});
            } else {
                others.push_back(doc);
            }
        }
        const std::size_t take = std::min(random_negatives, others.size());
        // Partial Fisher-Yates: the first `take` entries become the sample.
        for (std::size_t i = 0; i < take; ++i) {
            std::uniform_int_distribution<std::size_t> pick(i, others.size() - 1);
            std::swap(others[i], others[pick(rng)]);
            out.push_back({q.query_id, q.gold_doc_id, others[i]});
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Metrics

using Ranking = std::vector<std::string>;

namespace detail {

inline void check_aligned(const std::vector<Ranking>& rankings, const std::vector<std::string>& gold, std::size_t k) {
    if (rankings.size() != gold.size()) {
        throw ShapeError(std::to_string(rankings.size()) + " rankings for " + std::to_string(gold.size()) +
                         " gold labels");
    }
    if (k < 1) throw ConfigError("k must be >= 1");
}

// 1-based rank of gold within the first k entries, or 0.
inline std::size_t rank_within(const Ranking& ranking, const std::string& gold, std::size_t k) {
    const std::size_t limit = std::min(k, ranking.size());
    for (std::size_t i = 0; i < limit; ++i)
        if (ranking[i] == gold) return i + 1;
    return 0;
}

}  // namespace detail

inline double accuracy_at_k(const std::vector<Ranking>& rankings, const std::vector<std::string>& gold, std::size_t k) {
    detail::check_aligned(rankings, gold, k);
    if (rankings.empty()) return 0.0;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < rankings.size(); ++i) hits += detail::rank_within(rankings[i], gold[i], k) != 0;
    return double(hits) / double(rankings.size());
}

inline double mrr_at_k(const std::vector<Ranking>& rankings, const std::vector<std::string>& gold, std::size_t k = 10) {
    detail::check_aligned(rankings, gold, k);
    if (rankings.empty()) return 0.0;
    double total = 0.0;
    for (std::size_t i = 0; i < rankings.size(); ++i) {
        if (auto r = detail::rank_within(rankings[i], gold[i], k)) total += 1.0 / double(r);
    }
    return total / double(rankings.size());
}

struct RetrievalMetrics {
    double acc_at_5 = 0.0;
    double acc_at_10 = 0.0;
    double mrr_at_10 = 0.0;
    std::size_t n_queries = 0;
    std::size_t n_unscorable = 0;  // counted as misses
    std::size_t n_empty = 0;       // queries that had no candidates at all

    std::string to_text() const {
        char buf[256];
        std::snprintf(buf, sizeof buf,
                      "acc_at_5=%.6f\nacc_at_10=%.6f\nmrr_at_10=%.6f\nn_queries=%zu\nn_unscorable=%zu\nn_empty=%zu\n",
                      acc_at_5, acc_at_10, mrr_at_10, n_queries, n_unscorable, n_empty);
        return buf;
    }

    static RetrievalMetrics parse(std::string_view text, const std::string& origin = "<metrics>") {
        auto kv = KvConfig::parse(text, origin);
        for (const char* key : {"acc_at_5", "acc_at_10", "mrr_at_10", "n_queries"}) {
            if (!kv.has(key)) throw FormatError(origin + ": missing key '" + key + "'");
        }
        RetrievalMetrics m;
        try {
            m.acc_at_5 = kv.get<double>("acc_at_5", 0);
            m.acc_at_10 = kv.get<double>("acc_at_10", 0);
            m.mrr_at_10 = kv.get<double>("mrr_at_10", 0);
            m.n_queries = kv.get<std::size_t>("n_queries", 0);
            m.n_unscorable = kv.get<std::size_t>("n_unscorable", 0);
            m.n_empty = kv.get<std::size_t>("n_empty", 0);
        } catch (const ConfigError& e) {
            throw FormatError(origin + ": " + e.what());
        }
        auto in_unit = [](double v) { return v >= 0.0 && v <= 1.0; };
        if (!in_unit(m.acc_at_5) || !in_unit(m.acc_at_10) || !in_unit(m.mrr_at_10)) {
            throw FormatError(origin + ": metric outside [0, 1]");
        }
        return m;
    }
};

inline RetrievalMetrics compute_metrics(const std::vector<Ranking>& rankings, const std::vector<std::string>& gold) {
    RetrievalMetrics m;
    m.n_queries = rankings.size();
    m.acc_at_5 = accuracy_at_k(rankings, gold, 5);
    m.acc_at_10 = accuracy_at_k(rankings, gold, 10);
    m.mrr_at_10 = mrr_at_k(rankings, gold, 10);
    return m;
}

// Retrieves the top 10 for each query against the index and scores the
// rankings. Unscorable queries count as misses.
template <class T>
RetrievalMetrics evaluate(const enc::EncoderWeights<T>& w, const enc::EncoderConfig& cfg,
                          const enc::TextPipeline& pipe, const index::DocumentIndex& ix,
                          const std::vector<QueryRecord>& queries, std::size_t threads = 1) {
    if (queries.empty()) throw EmptyInput("evaluate: no queries in the selected split");
    std::vector<Ranking> rankings(queries.size());
    std::vector<char> unscorable(queries.size(), 0);
    parallel_for(queries.size(), threads, [&](std::size_t i) {
        try {
            for (const auto& hit : index::retrieve(queries[i].text, ix, 10, w, cfg, pipe)) rankings[i].push_back(hit.doc_id);
        } catch (const QueryUnscorable&) {
            unscorable[i] = 1;
        }
    });
    std::vector<std::string> gold;
    for (const auto& q : queries) gold.push_back(q.gold_doc_id);
    auto m = compute_metrics(rankings, gold);
    for (std::size_t i = 0; i < queries.size(); ++i) {
        m.n_unscorable += unscorable[i];
        m.n_empty += !unscorable[i] && rankings[i].empty();
    }
    return m;
}

}  // namespace kcb::eval
