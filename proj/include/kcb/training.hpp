#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <map>
#include <memory>
#include <numbers>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "kcb/encoder.hpp"
#include "kcb/error.hpp"
#include "kcb/kv_config.hpp"
#include "kcb/parallel.hpp"
#include "kcb/scorer.hpp"

namespace kcb::train {

using enc::EncoderConfig;
using enc::EncoderWeights;
using enc::WordFeatures;

enum class Decay { LINEAR, COSINE };

struct Schedule {
    double peak_lr = 1e-3;
    std::size_t warmup_steps = 0;
    std::size_t total_steps = 1;
    Decay decay = Decay::LINEAR;

    void validate() const {
        if (!(peak_lr > 0.0)) throw ConfigError("schedule: peak_lr must be > 0");
        if (total_steps < 1) throw ConfigError("schedule: total_steps must be >= 1");
        if (warmup_steps >= total_steps) {
            throw ConfigError("schedule: warmup_steps (" + std::to_string(warmup_steps) +
                              ") must be < total_steps (" + std::to_string(total_steps) + ")");
        }
    }
};

// Linear ramp from 0 to the peak over the warm-up, then linear or half-cosine
// decay reaching 0 at total_steps. Later steps clamp to the final value.
inline double lr_at(std::size_t step, const Schedule& s) {
    step = std::min(step, s.total_steps);
    if (step < s.warmup_steps) return s.peak_lr * double(step) / double(s.warmup_steps);
    const double t = double(step - s.warmup_steps) / double(s.total_steps - s.warmup_steps);
    if (s.decay == Decay::LINEAR) return s.peak_lr * (1.0 - t);
    return s.peak_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.98;
    double eps = 1e-8;
    double weight_decay = 0.0;  // decoupled (AdamW) when > 0
};

template <class T>
using NamedGrads = std::map<std::string, std::vector<T>>;

template <class T>
struct AdamState {
    std::size_t step = 0;
    std::map<std::string, std::vector<T>> m;
    std::map<std::string, std::vector<T>> v;
};

template <class T>
void optimizer_step(EncoderWeights<T>& w, const NamedGrads<T>& grads, AdamState<T>& state, const AdamConfig& cfg,
                    double lr) {
    for (const auto& [name, t] : w.blocks()) {
        auto it = grads.find(name);
        if (it == grads.end()) throw ConfigError("optimizer_step: no gradient for block '" + name + "'");
        if (it->second.size() != t.size()) {
            throw ConfigError("optimizer_step: gradient for '" + name + "' has " + std::to_string(it->second.size()) +
                              " values, block has " + std::to_string(t.size()));
        }
    }
    for (const auto& [name, g] : grads) {
        if (!w.has(name)) throw ConfigError("optimizer_step: gradient for unknown block '" + name + "'");
    }
    if (state.step > 0 && state.m.size() != w.blocks().size()) {
        throw ConfigError("optimizer_step: optimizer state does not match the parameter blocks");
    }
    ++state.step;
    const double bc1 = 1.0 - std::pow(cfg.beta1, double(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, double(state.step));
    const double shrink = 1.0 - lr * cfg.weight_decay;
    for (auto& [name, t] : w.blocks()) {
        const auto& g = grads.at(name);
        auto& m = state.m[name];
        auto& v = state.v[name];
        if (m.empty()) {
            m.assign(t.size(), T(0));
            v.assign(t.size(), T(0));
        }
        auto p = t.mutable_data();
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double gi = g[i];
            const double mi = cfg.beta1 * double(m[i]) + (1.0 - cfg.beta1) * gi;
            const double vi = cfg.beta2 * double(v[i]) + (1.0 - cfg.beta2) * gi * gi;
            m[i] = T(mi);
            v[i] = T(vi);
            if (cfg.weight_decay > 0.0) p[i] = T(double(p[i]) * shrink);
            p[i] -= T(lr * (mi / bc1) / (std::sqrt(vi / bc2) + cfg.eps));
        }
    }
}

// Scales all gradients so their joint L2 norm is at most max_norm (0 turns
// clipping off). Returns the norm before clipping.
template <class T>
double clip_global_norm(NamedGrads<T>& grads, double max_norm) {
    double ss = 0.0;
    for (const auto& [name, g] : grads)
        for (T x : g) ss += double(x) * double(x);
    const double norm = std::sqrt(ss);
    if (max_norm > 0.0 && norm > max_norm) {
        const T s = T(max_norm / norm);
        for (auto& [name, g] : grads)
            for (T& x : g) x *= s;
    }
    return norm;
}

// Sums per-text gradient stores block by block, in store order.
template <class T>
NamedGrads<T> collect_gradients(const EncoderWeights<T>& w, const std::vector<num::GradStore<T>>& stores) {
    NamedGrads<T> out;
    for (const auto& [name, t] : w.blocks()) {
        auto& g = out[name];
        g.assign(t.size(), T(0));
        for (const auto& s : stores) {
            if (const auto* p = s.find(t))
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += (*p)[i];
        }
    }
    return out;
}

namespace detail {

inline std::string format_double(double v) { return EncoderConfig::format_double(v); }

template <class Cfg>
KvConfig to_kv(const Cfg& c, const std::string& prefix) {
    KvConfig kv;
    Cfg::each_field(c, [&](const char* key, const auto& v) {
        using V = std::decay_t<decltype(v)>;
        if constexpr (std::is_floating_point_v<V>) {
            kv.set(prefix + key, format_double(v));
        } else {
            kv.set(prefix + key, std::to_string(v));
        }
    });
    return kv;
}

template <class Cfg>
Cfg with_overrides(Cfg c, const KvConfig& kv, const std::string& prefix) {
    Cfg::each_field(c, [&](const char* key, auto& v) {
        using V = std::decay_t<decltype(v)>;
        v = kv.get<V>(prefix + key, v);
    });
    c.seed = kv.get<std::uint64_t>("seed", c.seed);
    return c;
}

}  // namespace detail

struct PretrainConfig {
    double mask_prob = 0.15;
    double peak_lr = 4e-4;
    std::size_t warmup_steps = 3000;
    std::size_t total_steps = 50000;
    std::size_t batch_docs = 32;
    double beta1 = 0.9;
    double beta2 = 0.98;
    double eps = 1e-8;
    double clip_norm = 1.0;
    double stem_weight = 1.0;
    double pos_weight = 1.0;
    double tag_weight = 1.0;
    double affix_weight = 1.0;
    std::size_t checkpoint_every = 0;
    std::uint64_t seed = 1;

    template <class Self, class F>
    static void each_field(Self& c, F&& f) {
        f("mask_prob", c.mask_prob);
        f("peak_lr", c.peak_lr);
        f("warmup_steps", c.warmup_steps);
        f("total_steps", c.total_steps);
        f("batch_docs", c.batch_docs);
        f("beta1", c.beta1);
        f("beta2", c.beta2);
        f("eps", c.eps);
        f("clip_norm", c.clip_norm);
        f("stem_weight", c.stem_weight);
        f("pos_weight", c.pos_weight);
        f("tag_weight", c.tag_weight);
        f("affix_weight", c.affix_weight);
        f("checkpoint_every", c.checkpoint_every);
    }

    Schedule schedule() const { return {peak_lr, warmup_steps, total_steps, Decay::LINEAR}; }
    AdamConfig adam() const { return {beta1, beta2, eps, 0.0}; }

    void validate() const {
        if (!(mask_prob > 0.0 && mask_prob < 1.0)) throw ConfigError("pretrain: mask_prob must lie in (0, 1)");
        if (batch_docs < 1) throw ConfigError("pretrain: batch_docs must be >= 1");
        if (clip_norm < 0.0) throw ConfigError("pretrain: clip_norm must be >= 0");
        schedule().validate();
    }

    KvConfig to_kv() const {
        auto kv = detail::to_kv(*this, "pretrain.");
        kv.set("seed", std::to_string(seed));
        return kv;
    }
    PretrainConfig with_overrides(const KvConfig& kv) const { return detail::with_overrides(*this, kv, "pretrain."); }
};

struct FinetuneConfig {
    double peak_lr = 1e-5;
    std::size_t warmup_steps = 2000;
    std::size_t total_steps = 10000;
    std::size_t batch_triplets = 128;
    double weight_decay = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.98;
    double eps = 1e-8;
    double clip_norm = 1.0;
    std::size_t checkpoint_every = 0;
    std::uint64_t seed = 1;

    template <class Self, class F>
    static void each_field(Self& c, F&& f) {
        f("peak_lr", c.peak_lr);
        f("warmup_steps", c.warmup_steps);
        f("total_steps", c.total_steps);
        f("batch_triplets", c.batch_triplets);
        f("weight_decay", c.weight_decay);
        f("beta1", c.beta1);
        f("beta2", c.beta2);
        f("eps", c.eps);
        f("clip_norm", c.clip_norm);
        f("checkpoint_every", c.checkpoint_every);
    }

    Schedule schedule() const { return {peak_lr, warmup_steps, total_steps, Decay::COSINE}; }
    AdamConfig adam() const { return {beta1, beta2, eps, weight_decay}; }

    void validate() const {
        if (batch_triplets < 1) throw ConfigError("finetune: batch_triplets must be >= 1");
        if (weight_decay < 0.0) throw ConfigError("finetune: weight_decay must be >= 0");
        if (clip_norm < 0.0) throw ConfigError("finetune: clip_norm must be >= 0");
        schedule().validate();
    }

    KvConfig to_kv() const {
        auto kv = detail::to_kv(*this, "finetune.");
        kv.set("seed", std::to_string(seed));
        return kv;
    }
    FinetuneConfig with_overrides(const KvConfig& kv) const { return detail::with_overrides(*this, kv, "finetune."); }
};

// ---------------------------------------------------------------------------
// Masked-morphology pretraining

struct MaskedTarget {
    std::size_t word = 0;
    std::size_t stem = 0;  // stem id, or stem_vocab + unit id for fallback words
    std::size_t pos = 0;
    std::size_t tag = 0;
    std::vector<std::size_t> affixes;

    friend bool operator==(const MaskedTarget&, const MaskedTarget&) = default;
};

struct MaskedBatch {
    std::vector<WordFeatures> inputs;
    std::vector<MaskedTarget> targets;
};

// Masks each word with probability mask_prob, forcing at least one. A masked
// word's stem, affix, POS and tag ids are all replaced by the MASK id 0.
inline MaskedBatch mask_words(const std::vector<WordFeatures>& words, const PretrainConfig& pc,
                              const EncoderConfig& cfg, std::uint64_t seed) {
    if (words.empty()) throw EmptyInput("mask_words: no words");
    std::mt19937_64 rng(seed);
    std::bernoulli_distribution coin(pc.mask_prob);
    std::vector<bool> masked(words.size());
    bool any = false;
    for (std::size_t i = 0; i < words.size(); ++i) any = (masked[i] = coin(rng)) || any;
    if (!any) masked[std::uniform_int_distribution<std::size_t>(0, words.size() - 1)(rng)] = true;

    MaskedBatch out;
    out.inputs = words;
    for (std::size_t i = 0; i < words.size(); ++i) {
        if (!masked[i]) continue;
        const auto& f = words[i];
        out.targets.push_back({i, f.fallback ? cfg.stem_vocab + f.stem : f.stem, f.pos, f.tag, f.affixes});
        auto& in = out.inputs[i];
        in.fallback = false;
        in.stem = 0;
        for (auto& a : in.affixes) a = 0;
        in.pos = 0;
        in.tag = 0;
    }
    return out;
}

template <class T>
struct PretrainLoss {
    num::Tensor<T> total;
    double stem = 0, pos = 0, tag = 0, affix = 0;  // unweighted per-term means
};

// Stem, POS and tag cross-entropies plus the multi-label affix BCE (averaged
// over affix classes), each a mean over masked words. `normalizer` replaces
// the masked-word count in that mean, so per-document terms can be summed into
// a batch mean.
template <class T>
PretrainLoss<T> pretrain_loss(num::Tape<T>& tape, const MaskedBatch& batch, const EncoderWeights<T>& w,
                              const EncoderConfig& cfg, const PretrainConfig& pc, const enc::ForwardMode& mode = {},
                              std::size_t normalizer = 0) {
    using namespace num;
    if (batch.targets.empty()) throw EmptyInput("pretrain_loss: no masked words");
    auto fr = enc::forward(tape, batch.inputs, enc::Role::DOCUMENT, w, cfg, mode);
    const std::size_t n = batch.targets.size();
    std::vector<std::size_t> rows, stems, poss, tags;
    std::vector<T> affix_hot(n * cfg.affix_vocab, T(0));
    for (std::size_t i = 0; i < n; ++i) {
        const auto& t = batch.targets[i];
        rows.push_back(t.word + 1);
        stems.push_back(t.stem);
        poss.push_back(t.pos);
        tags.push_back(t.tag);
        for (auto a : t.affixes) {
            if (a >= cfg.affix_vocab) throw VocabError("affix id " + std::to_string(a) + " outside the vocabulary");
            affix_hot[i * cfg.affix_vocab + a] = T(1);
        }
    }
    auto h = gather_rows(tape, fr.hidden, std::span<const std::size_t>(rows));
    auto head = [&](const std::string& name) {
        return linear(tape, h, w["mlm." + name + ".weight"], w["mlm." + name + ".bias"]);
    };
    auto stem_l = cross_entropy(tape, head("stem"), std::span<const std::size_t>(stems));
    auto pos_l = cross_entropy(tape, head("pos"), std::span<const std::size_t>(poss));
    auto tag_l = cross_entropy(tape, head("tag"), std::span<const std::size_t>(tags));
    auto affix_l = bce_with_logits(tape, head("affix"), std::span<const T>(affix_hot));
    const double share = double(n) / double(normalizer ? normalizer : n);
    auto total = add(tape, add(tape, scale(tape, stem_l, T(pc.stem_weight * share)),
                               scale(tape, pos_l, T(pc.pos_weight * share))),
                     add(tape, scale(tape, tag_l, T(pc.tag_weight * share)),
                         scale(tape, affix_l, T(pc.affix_weight * share))));
    return {total, double(stem_l.item()), double(pos_l.item()), double(tag_l.item()), double(affix_l.item())};
}

// ---------------------------------------------------------------------------
// Triplet fine-tuning

struct Triplet {
    std::string query_id;
    std::string positive_id;
    std::string negative_id;

    std::string label() const { return query_id + "/" + positive_id + "/" + negative_id; }
    friend bool operator==(const Triplet&, const Triplet&) = default;
};

// Featurized texts referenced by triplets.
struct FeatureBank {
    std::map<std::string, std::vector<WordFeatures>> queries;
    std::map<std::string, std::vector<WordFeatures>> documents;
};

// 1x2 logits [s(q, d+), s(q, d-)] from encoder outputs.
template <class T>
num::Tensor<T> triplet_logits(num::Tape<T>& tape, const enc::ForwardResult<T>& q, const enc::ForwardResult<T>& pos,
                              const enc::ForwardResult<T>& neg) {
    return num::concat_cols(tape, std::vector<num::Tensor<T>>{
                                      score::max_sim(tape, q.embeddings, q.mask, pos.embeddings, pos.mask),
                                      score::max_sim(tape, q.embeddings, q.mask, neg.embeddings, neg.mask)});
}

// Softmax cross-entropy over [s+, s-] with the positive as target.
template <class T>
num::Tensor<T> triplet_loss(num::Tape<T>& tape, const std::vector<WordFeatures>& query,
                            const std::vector<WordFeatures>& positive, const std::vector<WordFeatures>& negative,
                            const EncoderWeights<T>& w, const EncoderConfig& cfg, const enc::ForwardMode& mode = {}) {
    auto q = enc::forward(tape, query, enc::Role::QUERY, w, cfg, mode);
    auto p = enc::forward(tape, positive, enc::Role::DOCUMENT, w, cfg, mode);
    auto n = enc::forward(tape, negative, enc::Role::DOCUMENT, w, cfg, mode);
    const std::size_t target = 0;
    return num::cross_entropy(tape, triplet_logits(tape, q, p, n), std::span<const std::size_t>(&target, 1));
}

template <class T>
struct BatchGradient {
    double loss = 0.0;
    NamedGrads<T> grads;
};

// Mean triplet loss over a batch and its gradient. Every distinct text is
// encoded once on its own tape; the scores are combined on a separate loss
// tape whose input gradients seed each text tape's backward pass.
template <class T>
BatchGradient<T> triplet_batch_gradient(const std::vector<Triplet>& batch, const FeatureBank& bank,
                                        const EncoderWeights<T>& w, const EncoderConfig& cfg, std::size_t threads,
                                        std::uint64_t dropout_seed) {
    if (batch.empty()) throw EmptyInput("triplet batch is empty");
    struct Text {
        const std::vector<WordFeatures>* words;
        enc::Role role;
    };
    std::vector<Text> texts;
    std::map<std::pair<int, std::string>, std::size_t> slot_of;
    auto intern = [&](enc::Role role, const std::string& id) {
        const auto key = std::make_pair(int(role), id);
        if (auto it = slot_of.find(key); it != slot_of.end()) return it->second;
        const auto& table = role == enc::Role::QUERY ? bank.queries : bank.documents;
        auto it = table.find(id);
        if (it == table.end()) {
            throw IndexError(std::string("triplet references unknown ") +
                             (role == enc::Role::QUERY ? "query" : "document") + " '" + id + "'");
        }
        texts.push_back({&it->second, role});
        return slot_of[key] = texts.size() - 1;
    };
    std::vector<std::array<std::size_t, 3>> slots;
    for (const auto& t : batch) {
        if (t.positive_id == t.negative_id) throw ConfigError("triplet " + t.label() + ": positive equals negative");
        slots.push_back({intern(enc::Role::QUERY, t.query_id), intern(enc::Role::DOCUMENT, t.positive_id),
                         intern(enc::Role::DOCUMENT, t.negative_id)});
    }

    std::vector<std::unique_ptr<num::Tape<T>>> tapes(texts.size());
    std::vector<enc::ForwardResult<T>> outs(texts.size());
    parallel_for(texts.size(), threads, [&](std::size_t i) {
        tapes[i] = std::make_unique<num::Tape<T>>();
        std::mt19937_64 rng(mix_seed(dropout_seed, i));
        outs[i] = enc::forward(*tapes[i], *texts[i].words, texts[i].role, w, cfg,
                               enc::ForwardMode{cfg.dropout > 0.0, &rng});
    });

    num::Tape<T> loss_tape;
    std::vector<num::Tensor<T>> rows;
    for (std::size_t b = 0; b < batch.size(); ++b) {
        const auto& [q, p, n] = slots[b];
        try {
            rows.push_back(triplet_logits(loss_tape, outs[q], outs[p], outs[n]));
        } catch (const EmptyAfterFilter& e) {
            throw EmptyAfterFilter("triplet " + batch[b].label() + ": " + e.what());
        }
    }
    const std::vector<std::size_t> targets(batch.size(), 0);
    auto loss = num::cross_entropy(loss_tape, num::concat_rows(loss_tape, rows), std::span<const std::size_t>(targets));
    const auto top = loss_tape.backward(loss);

    std::vector<num::GradStore<T>> stores(texts.size());
    parallel_for(texts.size(), threads, [&](std::size_t i) {
        const auto seed = top.grad_of(outs[i].embeddings);
        stores[i] = tapes[i]->backward(outs[i].embeddings, std::span<const T>(seed));
        tapes[i].reset();
    });
    return {double(loss.item()), collect_gradients(w, stores)};
}

// Batch mean of the pretraining loss over several masked documents.
template <class T>
BatchGradient<T> pretrain_batch_gradient(const std::vector<MaskedBatch>& docs, const EncoderWeights<T>& w,
                                         const EncoderConfig& cfg, const PretrainConfig& pc, std::size_t threads,
                                         std::uint64_t dropout_seed) {
    if (docs.empty()) throw EmptyInput("pretraining batch is empty");
    std::size_t masked = 0;
    for (const auto& d : docs) masked += d.targets.size();
    std::vector<double> losses(docs.size());
    std::vector<num::GradStore<T>> stores(docs.size());
    parallel_for(docs.size(), threads, [&](std::size_t i) {
        num::Tape<T> tape;
        std::mt19937_64 rng(mix_seed(dropout_seed, i));
        auto l = pretrain_loss(tape, docs[i], w, cfg, pc, enc::ForwardMode{cfg.dropout > 0.0, &rng}, masked);
        losses[i] = double(l.total.item());
        stores[i] = tape.backward(l.total);
    });
    double total = 0.0;
    for (double l : losses) total += l;
    return {total, collect_gradients(w, stores)};
}

// ---------------------------------------------------------------------------
// Training loops

struct StepRecord {
    std::size_t step = 0;
    double lr = 0.0;
    double loss = 0.0;
    double grad_norm = 0.0;
};

struct TrainHooks {
    std::ostream* log = nullptr;         // receives "step<TAB>lr<TAB>loss" lines
    std::size_t threads = 1;
    std::string checkpoint_prefix;       // checkpoints go to <prefix><step>.kcw
};

// Visits indices of a collection in freshly shuffled epochs.
class EpochSampler {
public:
    EpochSampler(std::size_t n, std::uint64_t seed) : order_(n), rng_(seed) {
        if (n == 0) throw EmptyInput("cannot sample from an empty collection");
        for (std::size_t i = 0; i < n; ++i) order_[i] = i;
        pos_ = n;
    }

    std::size_t next() {
        if (pos_ == order_.size()) {
            std::shuffle(order_.begin(), order_.end(), rng_);
            pos_ = 0;
        }
        return order_[pos_++];
    }

private:
    std::vector<std::size_t> order_;
    std::mt19937_64 rng_;
    std::size_t pos_ = 0;
};

namespace detail {

template <class T>
StepRecord apply_step(EncoderWeights<T>& w, BatchGradient<T>& bg, AdamState<T>& state, const AdamConfig& adam,
                      const Schedule& schedule, double clip_norm, std::size_t step, std::size_t checkpoint_every,
                      const TrainHooks& hooks) {
    if (!std::isfinite(bg.loss)) {
        throw NumericalError("non-finite loss at step " + std::to_string(step));
    }
    StepRecord rec{step, lr_at(step, schedule), bg.loss, clip_global_norm(bg.grads, clip_norm)};
    if (!std::isfinite(rec.grad_norm)) {
        throw NumericalError("non-finite gradient norm at step " + std::to_string(step));
    }
    optimizer_step(w, bg.grads, state, adam, rec.lr);
    if (hooks.log) {
        char line[96];
        std::snprintf(line, sizeof line, "%zu\t%.6g\t%.6f\n", rec.step, rec.lr, rec.loss);
        *hooks.log << line << std::flush;
    }
    if (checkpoint_every > 0 && step % checkpoint_every == 0 && !hooks.checkpoint_prefix.empty()) {
        w.save(hooks.checkpoint_prefix + std::to_string(step) + ".kcw");
    }
    return rec;
}

}  // namespace detail

template <class T>
std::vector<StepRecord> pretrain(EncoderWeights<T>& w, const EncoderConfig& cfg, const PretrainConfig& pc,
                                 const std::vector<std::vector<WordFeatures>>& corpus, const TrainHooks& hooks = {}) {
    pc.validate();
    if (corpus.empty()) throw EmptyInput("pretraining corpus is empty");
    EpochSampler sampler(corpus.size(), mix_seed(pc.seed, 1));
    AdamState<T> state;
    std::vector<StepRecord> history;
    for (std::size_t step = 1; step <= pc.total_steps; ++step) {
        std::vector<MaskedBatch> docs;
        for (std::size_t b = 0; b < pc.batch_docs; ++b) {
            docs.push_back(mask_words(corpus[sampler.next()], pc, cfg, mix_seed(mix_seed(pc.seed, 2), step * pc.batch_docs + b)));
        }
        auto bg = pretrain_batch_gradient(docs, w, cfg, pc, hooks.threads, mix_seed(mix_seed(pc.seed, 3), step));
        history.push_back(detail::apply_step(w, bg, state, pc.adam(), pc.schedule(), pc.clip_norm, step,
                                             pc.checkpoint_every, hooks));
    }
    return history;
}

template <class T>
std::vector<StepRecord> finetune(EncoderWeights<T>& w, const EncoderConfig& cfg, const FinetuneConfig& fc,
                                 const std::vector<Triplet>& triplets, const FeatureBank& bank,
                                 const TrainHooks& hooks = {}) {
    fc.validate();
    if (triplets.empty()) throw EmptyInput("no training triplets");
    EpochSampler sampler(triplets.size(), mix_seed(fc.seed, 4));
    AdamState<T> state;
    std::vector<StepRecord> history;
    for (std::size_t step = 1; step <= fc.total_steps; ++step) {
        std::vector<Triplet> batch;
        for (std::size_t b = 0; b < fc.batch_triplets; ++b) batch.push_back(triplets[sampler.next()]);
        auto bg = triplet_batch_gradient(batch, bank, w, cfg, hooks.threads, mix_seed(mix_seed(fc.seed, 5), step));
        history.push_back(detail::apply_step(w, bg, state, fc.adam(), fc.schedule(), fc.clip_norm, step,
                                             fc.checkpoint_every, hooks));
    }
    return history;
}

}  // namespace kcb::train
