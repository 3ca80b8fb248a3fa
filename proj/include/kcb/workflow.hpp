#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "kcb/encoder.hpp"
#include "kcb/error.hpp"
#include "kcb/evaldata.hpp"
#include "kcb/index.hpp"
#include "kcb/kv_config.hpp"
#include "kcb/morphology.hpp"
#include "kcb/parallel.hpp"
#include "kcb/synthlang.hpp"
#include "kcb/training.hpp"

namespace kcb::flow {

inline constexpr const char* kVersion = "kcb-0.1";

// Canonical artifact file names inside a run directory.
namespace files {
inline constexpr const char* lexicon = "lexicon.tsv";
inline constexpr const char* corpus = "corpus.tsv";
inline constexpr const char* queries = "queries.tsv";
inline constexpr const char* triplets = "triplets.tsv";
inline constexpr const char* bpe = "bpe.txt";
inline constexpr const char* pretrained = "pretrained.kcw";
inline constexpr const char* finetuned = "finetuned.kcw";
inline constexpr const char* index = "index.kcbi";
inline constexpr const char* metrics = "metrics.txt";
}  // namespace files

// Every module config plus the knobs that glue them together. Keys:
// synth.*, encoder.*, pretrain.*, finetune.*, split.{train,dev,test},
// bpe.merges, triplets.random_negatives, seed, threads, path.<artifact>.
struct RunConfig {
    KvConfig kv;
    synth::SynthSpec synth;
    enc::EncoderConfig encoder;
    train::PretrainConfig pretrain;
    train::FinetuneConfig finetune;
    eval::SplitRatios split;
    std::size_t bpe_merges = 200;
    std::size_t random_negatives = 100;
    std::uint64_t seed = 1;
    std::size_t threads = 1;

    static RunConfig from_kv(const KvConfig& kv) {
        RunConfig rc;
        rc.kv = kv;
        rc.seed = kv.get<std::uint64_t>("seed", rc.seed);
        rc.threads = kv.get<std::size_t>("threads", rc.threads);
        if (rc.threads < 1) throw ConfigError("threads must be >= 1");
        rc.synth = synth::SynthSpec::from_kv(kv);
        KvConfig enc_kv;
        for (const auto& [k, v] : kv.values())
            if (k.rfind("encoder.", 0) == 0) enc_kv.set(k.substr(8), v);
        rc.encoder = enc::EncoderConfig{}.with_overrides(enc_kv);
        rc.pretrain = train::PretrainConfig{}.with_overrides(kv);
        rc.finetune = train::FinetuneConfig{}.with_overrides(kv);
        rc.split.train = kv.get<double>("split.train", rc.split.train);
        rc.split.dev = kv.get<double>("split.dev", rc.split.dev);
        rc.split.test = kv.get<double>("split.test", rc.split.test);
        rc.bpe_merges = kv.get<std::size_t>("bpe.merges", rc.bpe_merges);
        rc.random_negatives = kv.get<std::size_t>("triplets.random_negatives", rc.random_negatives);
        return rc;
    }

    static RunConfig load(const std::string& path) { return from_kv(KvConfig::load(path)); }

    // Replaces the global seed and every module seed.
    RunConfig with_seed(std::uint64_t s) const {
        KvConfig k = kv;
        k.set("seed", std::to_string(s));
        k.set("synth.seed", std::to_string(s));
        return from_kv(k);
    }
};

// Shortens a schedule to `steps`, keeping the warmup fraction.
inline void rescale(std::size_t& warmup, std::size_t& total, std::size_t steps) {
    if (steps < 2) throw ConfigError("--steps must be >= 2");
    warmup = std::min(steps - 1, std::size_t(std::llround(double(warmup) * double(steps) / double(total))));
    total = steps;
}

inline void set_pretrain_steps(train::PretrainConfig& pc, std::size_t steps) {
    rescale(pc.warmup_steps, pc.total_steps, steps);
}
inline void set_finetune_steps(train::FinetuneConfig& fc, std::size_t steps) {
    rescale(fc.warmup_steps, fc.total_steps, steps);
}

// "# kcb-0.1 <what> seed=N" header line for text artifacts.
inline std::string header(const std::string& what, std::uint64_t seed) {
    return "# " + std::string(kVersion) + " " + what + " seed=" + std::to_string(seed) + "\n";
}

// ---------------------------------------------------------------------------
// Stages

inline std::vector<eval::QueryRecord> assign_splits(const std::vector<eval::QueryRecord>& queries,
                                                    const RunConfig& rc) {
    return eval::split_queries(queries, rc.split, mix_seed(rc.seed, 11));
}

// Triplets for training-split queries; negatives come from training topics
// only, so evaluation topics stay unseen during fine-tuning.
inline std::vector<train::Triplet> training_triplets(const std::vector<eval::QueryRecord>& split_queries,
                                                     const std::vector<index::CorpusRecord>& corpus,
                                                     const RunConfig& rc) {
    auto train_q = eval::queries_in(split_queries, eval::Split::TRAIN);
    std::set<std::string> train_topics;
    for (const auto& q : train_q) train_topics.insert(q.gold_doc_id);
    std::vector<std::pair<std::string, std::string>> topics;
    for (const auto& r : corpus)
        if (train_topics.count(r.doc_id)) topics.push_back({r.doc_id, r.module_id});
    return eval::build_triplets(train_q, topics, mix_seed(rc.seed, 12), rc.random_negatives);
}

// BPE merges learned from the out-of-lexicon tokens of the corpus.
inline morph::BpeModel learn_bpe(const std::vector<index::CorpusRecord>& corpus, const morph::Lexicon& lex,
                                 std::size_t merges) {
    std::vector<std::string> oov;
    for (const auto& r : corpus)
        for (auto& tok : unicode::split_whitespace(unicode::nfc(r.text)))
            if (!lex.lookup(tok)) oov.push_back(tok);
    if (oov.empty()) oov.push_back("0");
    return morph::train_bpe(oov, merges);
}

inline enc::EncoderConfig encoder_config(const RunConfig& rc, const morph::Lexicon& lex, const morph::BpeModel& bpe) {
    auto cfg = rc.encoder;
    cfg.set_vocab(lex, bpe);
    cfg.validate();
    return cfg;
}

// Copy of `w` whose output projection has width `embed_dim`; a changed
// width gets a freshly initialized projection.
template <class T>
enc::EncoderWeights<T> with_embed_dim(const enc::EncoderWeights<T>& w, std::size_t embed_dim, std::uint64_t seed) {
    enc::EncoderWeights<T> out;
    for (const auto& [name, t] : w.blocks()) {
        if (name == "proj.weight" && t.shape()[1] != embed_dim) {
            const std::size_t sd = t.shape()[0];
            std::mt19937_64 rng(seed);
            std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(double(sd)));
            std::vector<T> v(sd * embed_dim);
            for (auto& x : v) x = T(normal(rng));
            out.add(name, num::Tensor<T>({sd, embed_dim}, std::move(v), true));
        } else {
            std::vector<T> v(t.data().begin(), t.data().end());
            out.add(name, num::Tensor<T>(t.shape(), std::move(v), true));
        }
    }
    return out;
}

// Loads weights whose embedding width is read from the checkpoint itself.
inline std::pair<enc::EncoderConfig, enc::EncoderWeights<float>> load_weights(const std::string& path,
                                                                             enc::EncoderConfig cfg) {
    auto blocks = num::load_checkpoint(path);
    for (const auto& b : blocks)
        if (b.name == "proj.weight" && b.shape.size() == 2) cfg.embed_dim = b.shape[1];
    return {cfg, enc::EncoderWeights<float>::from_blocks(blocks, cfg)};
}

inline std::vector<std::vector<enc::WordFeatures>> featurize_corpus(const std::vector<index::CorpusRecord>& corpus,
                                                                    const enc::TextPipeline& pipe,
                                                                    const enc::EncoderConfig& cfg) {
    std::vector<std::vector<enc::WordFeatures>> out;
    for (const auto& r : corpus) {
        try {
            out.push_back(pipe.features(r.text, cfg));
        } catch (const Error& e) {
            throw FormatError("doc '" + r.doc_id + "': " + e.what());
        }
    }
    return out;
}

inline train::FeatureBank feature_bank(const std::vector<train::Triplet>& triplets,
                                       const std::vector<eval::QueryRecord>& queries,
                                       const std::vector<index::CorpusRecord>& corpus, const enc::TextPipeline& pipe,
                                       const enc::EncoderConfig& cfg) {
    std::set<std::string> want_q, want_d;
    for (const auto& t : triplets) {
        want_q.insert(t.query_id);
        want_d.insert(t.positive_id);
        want_d.insert(t.negative_id);
    }
    train::FeatureBank bank;
    for (const auto& q : queries)
        if (want_q.count(q.query_id)) bank.queries[q.query_id] = pipe.features(q.text, cfg);
    for (const auto& r : corpus)
        if (want_d.count(r.doc_id)) bank.documents[r.doc_id] = pipe.features(r.text, cfg);
    return bank;
}

// The loaded inputs of a run directory.
struct Dataset {
    morph::Lexicon lexicon;
    morph::BpeModel bpe;
    std::vector<index::CorpusRecord> corpus;
    std::vector<eval::QueryRecord> queries;  // with splits assigned
};

// Generates the benchmark in memory: lexicon, corpus, split queries, BPE.
inline Dataset synthesize(const RunConfig& rc) {
    auto out = synth::generate(rc.synth);
    Dataset d;
    d.bpe = learn_bpe(out.corpus, out.lexicon, rc.bpe_merges);
    d.lexicon = std::move(out.lexicon);
    d.corpus = std::move(out.corpus);
    d.queries = assign_splits(out.queries, rc);
    return d;
}

struct TrainedModel {
    enc::EncoderConfig cfg;
    enc::EncoderWeights<float> weights;
};

inline TrainedModel pretrain_stage(const Dataset& d, const RunConfig& rc, const train::TrainHooks& hooks = {}) {
    const auto cfg = encoder_config(rc, d.lexicon, d.bpe);
    enc::TextPipeline pipe{&d.lexicon, &d.bpe, {}};
    auto w = enc::EncoderWeights<float>::init(cfg, mix_seed(rc.seed, 13));
    train::pretrain(w, cfg, rc.pretrain, featurize_corpus(d.corpus, pipe, cfg), hooks);
    return {cfg, std::move(w)};
}

inline TrainedModel finetune_stage(const Dataset& d, const TrainedModel& pretrained, std::size_t embed_dim,
                                   const RunConfig& rc, const train::TrainHooks& hooks = {}) {
    auto cfg = pretrained.cfg;
    cfg.embed_dim = embed_dim;
    auto w = with_embed_dim(pretrained.weights, embed_dim, mix_seed(rc.seed, 14));
    enc::TextPipeline pipe{&d.lexicon, &d.bpe, {}};
    const auto triplets = training_triplets(d.queries, d.corpus, rc);
    const auto bank = feature_bank(triplets, d.queries, d.corpus, pipe, cfg);
    train::finetune(w, cfg, rc.finetune, triplets, bank, hooks);
    return {cfg, std::move(w)};
}

inline eval::RetrievalMetrics evaluate_stage(const Dataset& d, const TrainedModel& m, eval::Split split,
                                             std::size_t threads = 1) {
    enc::TextPipeline pipe{&d.lexicon, &d.bpe, {}};
    const auto ix = index::build_index(d.corpus, m.weights, m.cfg, pipe, threads);
    return eval::evaluate(m.weights, m.cfg, pipe, ix, eval::queries_in(d.queries, split), threads);
}

}  // namespace kcb::flow
