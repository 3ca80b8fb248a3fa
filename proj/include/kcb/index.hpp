#pragma once

#include <algorithm>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "kcb/binary_io.hpp"
#include "kcb/encoder.hpp"
#include "kcb/error.hpp"
#include "kcb/parallel.hpp"
#include "kcb/scorer.hpp"

namespace kcb::index {

using enc::TokenEmbeddingMatrix;

inline constexpr char kIndexMagic[4] = {'K', 'C', 'B', 'I'};
inline constexpr std::uint32_t kIndexVersion = 1;

// One line of a corpus file.
struct CorpusRecord {
    std::string doc_id;
    std::string module_id;
    std::string text;

    friend bool operator==(const CorpusRecord&, const CorpusRecord&) = default;
};

struct IndexEntry {
    std::string doc_id;
    std::string module_id;
    TokenEmbeddingMatrix matrix;

    friend bool operator==(const IndexEntry&, const IndexEntry&) = default;
};

struct DocumentIndex {
    std::size_t embed_dim = 0;
    std::vector<IndexEntry> entries;

    std::size_t size() const { return entries.size(); }
    bool empty() const { return entries.empty(); }

    friend bool operator==(const DocumentIndex&, const DocumentIndex&) = default;
};

// Encodes every document with the DOCUMENT role, preserving input order.
// Per-document failures are gathered and reported together.
template <class T>
DocumentIndex build_index(const std::vector<CorpusRecord>& corpus, const enc::EncoderWeights<T>& w,
                          const enc::EncoderConfig& cfg, const enc::TextPipeline& pipe, std::size_t threads = 1) {
    std::set<std::string> seen;
    for (const auto& r : corpus) {
        if (!seen.insert(r.doc_id).second) throw FormatError("build_index: duplicate doc_id '" + r.doc_id + "'");
    }
    DocumentIndex ix;
    ix.embed_dim = cfg.embed_dim;
    ix.entries.resize(corpus.size());
    std::vector<std::string> failures(corpus.size());
    parallel_for(corpus.size(), threads, [&](std::size_t i) {
        const auto& r = corpus[i];
        try {
            auto m = enc::encode_text(r.text, enc::Role::DOCUMENT, w, cfg, pipe);
            if (std::none_of(m.mask.begin(), m.mask.end(), [](bool b) { return b; })) {
                throw EmptyAfterFilter("no scoring tokens");
            }
            m.doc_id = r.doc_id;
            ix.entries[i] = {r.doc_id, r.module_id, std::move(m)};
        } catch (const Error& e) {
            failures[i] = "doc '" + r.doc_id + "': " + e.what();
        }
    });
    std::string report;
    std::size_t failed = 0;
    for (const auto& f : failures) {
        if (f.empty()) continue;
        ++failed;
        report += "\n  " + f;
    }
    if (failed) {
        throw FormatError("build_index: " + std::to_string(failed) + " of " + std::to_string(corpus.size()) +
                          " documents failed:" + report);
    }
    return ix;
}

inline std::string encode_index(const DocumentIndex& ix) {
    ByteWriter out;
    out.raw(kIndexMagic, 4);
    out.u32(kIndexVersion);
    out.u32(static_cast<std::uint32_t>(ix.embed_dim));
    out.u64(ix.entries.size());
    for (const auto& e : ix.entries) {
        const auto& m = e.matrix;
        if (m.dim != ix.embed_dim || m.rows.size() != m.length() * m.dim) {
            throw ShapeError("index entry '" + e.doc_id + "' does not match embed_dim " + std::to_string(ix.embed_dim));
        }
        out.short_string(e.doc_id, "doc_id");
        out.short_string(e.module_id, "module_id");
        out.u32(static_cast<std::uint32_t>(m.length()));
        std::string bits((m.length() + 7) / 8, '\0');
        for (std::size_t i = 0; i < m.length(); ++i)
            if (m.mask[i]) bits[i / 8] = static_cast<char>(bits[i / 8] | (1 << (i % 8)));
        out.bytes(bits);
        out.raw(m.rows.data(), m.rows.size() * sizeof(float));
    }
    return out.buffer();
}

inline DocumentIndex decode_index(std::string bytes, const std::string& origin = "<memory>") {
    ByteReader in(std::move(bytes), [&](const std::string& what) {
        throw CorruptIndexError(origin + ": truncated index (" + what + ")");
    });
    if (in.remaining() < 4 || in.bytes(4) != std::string(kIndexMagic, 4)) {
        throw FormatError(origin + ": not an index file (bad magic)");
    }
    const auto version = in.u32();
    if (version != kIndexVersion) {
        throw FormatError(origin + ": unsupported index version " + std::to_string(version) +
                          "; supported versions: " + std::to_string(kIndexVersion));
    }
    DocumentIndex ix;
    ix.embed_dim = in.u32();
    const auto count = in.u64();
    std::set<std::string> seen;
    for (std::uint64_t d = 0; d < count; ++d) {
        IndexEntry e;
        e.doc_id = in.short_string();
        e.module_id = in.short_string();
        if (!seen.insert(e.doc_id).second) throw CorruptIndexError(origin + ": duplicate doc_id '" + e.doc_id + "'");
        const std::size_t length = in.u32();
        const auto bits = in.bytes((length + 7) / 8);
        auto& m = e.matrix;
        m.dim = ix.embed_dim;
        m.doc_id = e.doc_id;
        m.mask.resize(length);
        for (std::size_t i = 0; i < length; ++i) m.mask[i] = (static_cast<unsigned char>(bits[i / 8]) >> (i % 8)) & 1;
        if (length % 8 && (static_cast<unsigned char>(bits.back()) >> (length % 8)) != 0) {
            throw CorruptIndexError(origin + ": padding bits set in mask of '" + e.doc_id + "'");
        }
        if (ix.embed_dim != 0 && length > in.remaining() / (ix.embed_dim * sizeof(float))) {
            throw CorruptIndexError(origin + ": truncated index (rows of '" + e.doc_id + "')");
        }
        m.rows.resize(length * ix.embed_dim);
        in.floats(m.rows.data(), m.rows.size());
        ix.entries.push_back(std::move(e));
    }
    if (in.remaining() != 0) {
        throw CorruptIndexError(origin + ": " + std::to_string(in.remaining()) + " trailing bytes");
    }
    return ix;
}

inline void save_index(const DocumentIndex& ix, const std::string& path) {
    ByteWriter w;
    w.bytes(encode_index(ix));
    w.write_file(path);
}

inline DocumentIndex load_index(const std::string& path) { return decode_index(ByteReader::slurp(path), path); }

// Exhaustive MaxSim over the index; the k best in top_k order.
inline std::vector<score::ScoredDoc> search(const TokenEmbeddingMatrix& query, const DocumentIndex& ix,
                                            std::size_t k) {
    if (k < 1) throw ConfigError("search: k must be >= 1");
    std::vector<score::ScoredDoc> scores;
    scores.reserve(ix.size());
    for (const auto& e : ix.entries) {
        try {
            scores.push_back({e.doc_id, score::max_sim(query, e.matrix)});
        } catch (const EmptyAfterFilter& err) {
            if (std::none_of(query.mask.begin(), query.mask.end(), [](bool b) { return b; })) {
                throw QueryUnscorable(std::string("query has no scoring tokens: ") + err.what());
            }
            throw EmptyAfterFilter("doc '" + e.doc_id + "': " + err.what());
        }
    }
    return score::top_k(std::move(scores), k);
}

template <class T>
std::vector<score::ScoredDoc> retrieve(std::string_view query_text, const DocumentIndex& ix, std::size_t k,
                                       const enc::EncoderWeights<T>& w, const enc::EncoderConfig& cfg,
                                       const enc::TextPipeline& pipe) {
    if (k < 1) throw ConfigError("retrieve: k must be >= 1");
    if (ix.embed_dim != cfg.embed_dim) {
        throw ShapeError("index embed_dim " + std::to_string(ix.embed_dim) + " does not match encoder embed_dim " +
                         std::to_string(cfg.embed_dim));
    }
    auto q = enc::encode_text(query_text, enc::Role::QUERY, w, cfg, pipe);
    if (std::none_of(q.mask.begin(), q.mask.end(), [](bool b) { return b; })) {
        throw QueryUnscorable("query has no scoring tokens after filtering");
    }
    return search(q, ix, k);
}

}  // namespace kcb::index
