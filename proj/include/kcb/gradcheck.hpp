#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <string>
#include <vector>

#include "kcb/encoder.hpp"
#include "kcb/synthlang.hpp"
#include "kcb/training.hpp"

namespace kcb::gradcheck {

struct Options {
    double h = 1e-5;
    double tolerance = 1e-3;
    std::size_t max_coords_per_block = 0;  // 0 checks every entry
    std::uint64_t seed = 1;
};

struct BlockCheck {
    std::string name;
    std::size_t checked = 0;
    double rel_error = 0.0;
    bool passed = true;
};

struct Report {
    double tolerance = 0.0;
    std::vector<BlockCheck> blocks;

    bool passed() const {
        return std::all_of(blocks.begin(), blocks.end(), [](const BlockCheck& b) { return b.passed; });
    }
    double worst() const {
        double w = 0;
        for (const auto& b : blocks) w = std::max(w, b.rel_error);
        return w;
    }

    // One "block<TAB>entries<TAB>rel_error<TAB>ok|FAIL" line per block.
    std::string to_text() const {
        std::string out;
        char line[256];
        for (const auto& b : blocks) {
            std::snprintf(line, sizeof line, "%s\t%zu\t%.3e\t%s\n", b.name.c_str(), b.checked, b.rel_error,
                          b.passed ? "ok" : "FAIL");
            out += line;
        }
        std::snprintf(line, sizeof line, "worst\t%.3e\ttolerance\t%.1e\t%s\n", worst(), tolerance,
                      passed() ? "PASS" : "FAIL");
        return out + line;
    }
};

// ||a - b|| / max(||a||, ||b||), or ||a - b|| when both vanish.
inline double relative_error(const std::vector<double>& a, const std::vector<double>& b) {
    double diff = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff += (a[i] - b[i]) * (a[i] - b[i]);
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    const double denom = std::max(std::sqrt(na), std::sqrt(nb));
    return denom < 1e-12 ? std::sqrt(diff) : std::sqrt(diff) / denom;
}

// Compares tape gradients of the triplet loss against central differences,
// block by block.
inline Report check_triplet_gradients(enc::EncoderWeights<double> w, const enc::EncoderConfig& cfg,
                                      const std::vector<enc::WordFeatures>& query,
                                      const std::vector<enc::WordFeatures>& positive,
                                      const std::vector<enc::WordFeatures>& negative, const Options& opt = {}) {
    auto loss_value = [&] {
        num::Tape<double> tape;
        return train::triplet_loss(tape, query, positive, negative, w, cfg).item();
    };
    num::Tape<double> tape;
    auto loss = train::triplet_loss(tape, query, positive, negative, w, cfg);
    auto grads = tape.backward(loss);

    std::mt19937_64 rng(opt.seed);
    Report report;
    report.tolerance = opt.tolerance;
    for (auto& [name, t] : w.blocks()) {
        const auto tape_grad = grads.grad_of(t);
        std::vector<std::size_t> coords(t.size());
        for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
        if (opt.max_coords_per_block && coords.size() > opt.max_coords_per_block) {
            std::shuffle(coords.begin(), coords.end(), rng);
            coords.resize(opt.max_coords_per_block);
            std::sort(coords.begin(), coords.end());
        }
        std::vector<double> fd, analytic;
        auto values = t.mutable_data();
        for (auto i : coords) {
            const double saved = values[i];
            values[i] = saved + opt.h;
            const double up = loss_value();
            values[i] = saved - opt.h;
            const double down = loss_value();
            values[i] = saved;
            fd.push_back((up - down) / (2 * opt.h));
            analytic.push_back(tape_grad[i]);
        }
        BlockCheck b{name, coords.size(), relative_error(analytic, fd), true};
        b.passed = b.rel_error < opt.tolerance;
        report.blocks.push_back(std::move(b));
    }
    return report;
}

// A miniature generated language and the matching small encoder, enough to
// exercise every parameter block cheaply.
struct TinySetup {
    synth::SynthOutput data;
    morph::BpeModel bpe;
    enc::EncoderConfig cfg;
};

inline TinySetup tiny_setup(std::uint64_t seed) {
    synth::SynthSpec spec;
    spec.stems = 30;
    spec.affixes = 6;
    spec.morph_tags = 8;
    spec.topics = 2;
    spec.modules = 1;
    spec.words_per_topic = 14;
    spec.queries_per_topic = 1;
    spec.unique_stems_per_topic = 4;
    spec.module_stems = 1;
    spec.common_stems_per_topic = 1;
    spec.prepositions = 2;
    spec.forms_per_stem = 3;
    spec.max_affixes_per_form = 2;
    spec.query_min_words = 3;
    spec.query_max_words = 4;
    spec.seed = seed;
    TinySetup s{synth::generate(spec), {}, {}};
    std::vector<std::string> texts;
    for (const auto& r : s.data.corpus) texts.push_back(r.text);
    s.bpe = morph::train_bpe(texts, 20);
    auto& cfg = s.cfg;
    cfg.morph_layers = 2;
    cfg.morph_dim = 16;
    cfg.morph_heads = 2;
    cfg.seq_layers = 2;
    cfg.seq_dim = 48;
    cfg.seq_heads = 4;
    cfg.ffn_mult = 2;
    cfg.embed_dim = 8;
    cfg.max_seq_len = 32;
    cfg.set_vocab(s.data.lexicon, s.bpe);
    return s;
}

// Runs the block check on the tiny setup: the first query against its gold
// topic and the other topic.
inline Report run_tiny(std::uint64_t seed, const Options& opt = {}) {
    auto s = tiny_setup(seed);
    enc::TextPipeline pipe{&s.data.lexicon, &s.bpe, {}};
    const auto& q = s.data.queries.front();
    const auto& pos = s.data.corpus[0].doc_id == q.gold_doc_id ? s.data.corpus[0] : s.data.corpus[1];
    const auto& neg = &pos == &s.data.corpus[0] ? s.data.corpus[1] : s.data.corpus[0];
    auto w = enc::EncoderWeights<double>::init(s.cfg, seed);
    return check_triplet_gradients(std::move(w), s.cfg, pipe.features(q.text, s.cfg), pipe.features(pos.text, s.cfg),
                                   pipe.features(neg.text, s.cfg), opt);
}

}  // namespace kcb::gradcheck
