#pragma once

#include <random>
#include <string>
#include <vector>

#include "kcb/encoder.hpp"
#include "kcb/morphology.hpp"

namespace kcbtest {

using namespace kcb;

// A handful of inflected words, a preposition, punctuation, and a BPE model
// for names.
inline morph::Lexicon toy_lexicon() {
    return morph::Lexicon::parse(
        "ibihe\the\ti,bi\tNOUN\tN8\n"
        "bihe\the\tbi\tNOUN\tN8\n"
        "umuhe\the\tu,mu\tNOUN\tN1\n"
        "bikoresho\tkoresho\tbi\tNOUN\tN8\n"
        "ikoresho\tkoresho\ti\tNOUN\tN9\n"
        "bishobora\tshobor\tbi,a\tVERB\tV3\n"
        "kwifashishwa\tfash\tku,ii,ish,w,a\tVERB\tV7\n"
        "inkoko\tkoko\ti,n\tNOUN\tN9\n"
        "nziza\tziza\tn\tADJ\tA1\n"
        "mu\tmu\t\tPREP\tPR\n"
        "ku\tku\t\tPREP\tPR\n"
        ".\t.\t\tPUNCT\tPU\n"
        "?\t?\t\tPUNCT\tPU\n");
}

inline morph::BpeModel toy_bpe() { return morph::train_bpe({"kigali kigali musanze huye rubavu 2024"}, 12); }

// The small configuration used for gradient checks: 2+2 layers,
// morph_dim 16, embed_dim 8.
inline enc::EncoderConfig tiny_config(const morph::Lexicon& lex, const morph::BpeModel& bpe) {
    enc::EncoderConfig cfg;
    cfg.morph_layers = 2;
    cfg.morph_dim = 16;
    cfg.morph_heads = 2;
    cfg.seq_layers = 2;
    cfg.seq_dim = 48;
    cfg.seq_heads = 4;
    cfg.ffn_mult = 2;
    cfg.embed_dim = 8;
    cfg.max_seq_len = 32;
    cfg.set_vocab(lex, bpe);
    return cfg;
}

// Random sentences over the toy lexicon plus a few fallback names.
inline std::string toy_text(std::mt19937_64& rng, std::size_t words) {
    static const std::vector<std::string> vocab{"ibihe",  "bihe",   "umuhe", "bikoresho", "ikoresho", "bishobora",
                                                "kwifashishwa", "inkoko", "nziza", "mu", "ku", ".", "kigali", "2024"};
    std::uniform_int_distribution<std::size_t> pick(0, vocab.size() - 1);
    std::string out;
    for (std::size_t i = 0; i < words; ++i) out += (i ? " " : "") + vocab[pick(rng)];
    return out;
}

}  // namespace kcbtest
