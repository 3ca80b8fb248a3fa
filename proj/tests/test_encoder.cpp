#include <cmath>
#include <filesystem>
#include <random>

#include <gtest/gtest.h>

#include "kcb/encoder.hpp"
#include "support/fixtures.hpp"

using namespace kcb;
using namespace kcb::enc;

namespace {

struct Toy {
    morph::Lexicon lex = kcbtest::toy_lexicon();
    morph::BpeModel bpe = kcbtest::toy_bpe();
    EncoderConfig cfg = kcbtest::tiny_config(lex, bpe);
    TextPipeline pipe{&lex, &bpe, {}};

    std::vector<WordFeatures> features(const std::string& text) const { return pipe.features(text, cfg); }
};

std::vector<double> rows_of(const num::Tensor<double>& t, std::size_t first, std::size_t last) {
    const std::size_t w = t.shape()[1];
    return {t.data().begin() + first * w, t.data().begin() + last * w};
}

// GEMM blocking may differ with the row count, so allow rounding noise.
void expect_close(const std::vector<double>& a, const std::vector<double>& b) {
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12) << "at " << i;
}

}  // namespace

TEST(EncoderConfig, ValidatesTierWidths) {
    Toy s;
    EXPECT_NO_THROW(s.cfg.validate());
    auto bad = s.cfg;
    bad.seq_dim = 40;
    EXPECT_THROW(bad.validate(), ConfigError);
    bad = s.cfg;
    bad.morph_heads = 3;
    EXPECT_THROW(bad.validate(), ConfigError);
    bad = s.cfg;
    bad.embed_dim = 0;
    EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(EncoderConfig, KeyValueRoundTrip) {
    Toy s;
    auto again = EncoderConfig::from_kv(KvConfig::parse(s.cfg.to_kv().to_string()));
    EXPECT_EQ(again.to_kv().to_string(), s.cfg.to_kv().to_string());
}

TEST(EncodeMorphology, SlotCountsFollowAffixCount) {
    Toy s;
    auto w = EncoderWeights<double>::init(s.cfg, 1);
    num::Tape<double> tape;
    auto m = encode_morphology(tape, s.features("mu bihe ibihe"), w, s.cfg);
    ASSERT_EQ(m.words(), 3u);
    EXPECT_EQ(m.bounds[1] - m.bounds[0], 3u);  // stem, POS, tag
    EXPECT_EQ(m.bounds[2] - m.bounds[1], 4u);
    EXPECT_EQ(m.bounds[3] - m.bounds[2], 5u);  // two affixes
    EXPECT_EQ(m.slots.shape(), (num::Shape{12, s.cfg.morph_dim}));
}

TEST(EncodeMorphology, AffixesBeyondCapAreTruncated) {
    Toy s;
    s.cfg.max_affixes = 2;
    auto w = EncoderWeights<double>::init(s.cfg, 1);
    num::Tape<double> tape;
    auto m = encode_morphology(tape, s.features("kwifashishwa"), w, s.cfg);
    EXPECT_EQ(m.bounds[1], 2u + 3u);
}

TEST(EncodeMorphology, WordsDoNotSeeEachOther) {
    Toy s;
    auto w = EncoderWeights<double>::init(s.cfg, 2);
    num::Tape<double> tape;
    auto a = encode_morphology(tape, s.features("ibihe bishobora"), w, s.cfg);
    auto b = encode_morphology(tape, s.features("bishobora ibihe"), w, s.cfg);
    // ibihe and bishobora both have two affixes: 5 slots each.
    expect_close(rows_of(a.slots, 0, 5), rows_of(b.slots, 5, 10));
    expect_close(rows_of(a.slots, 5, 10), rows_of(b.slots, 0, 5));
    // Splicing a different neighbour changes nothing either.
    auto c = encode_morphology(tape, s.features("ibihe nziza"), w, s.cfg);
    expect_close(rows_of(a.slots, 0, 5), rows_of(c.slots, 0, 5));
}

TEST(ComposeWordEmbedding, FixedWidthAndAffixSensitive) {
    Toy s;
    auto w = EncoderWeights<double>::init(s.cfg, 3);
    num::Tape<double> tape;
    auto words = compose_word_embedding(tape, encode_morphology(tape, s.features("mu ibihe"), w, s.cfg));
    EXPECT_EQ(words.shape(), (num::Shape{2, 3 * s.cfg.morph_dim}));

    // Same stem, POS and tag; only the affixes differ.
    auto f = s.features("ibihe");
    auto g = f;
    g[0].affixes[0] = *s.lex.affixes().find("u");
    auto a = compose_word_embedding(tape, encode_morphology(tape, f, w, s.cfg));
    auto b = compose_word_embedding(tape, encode_morphology(tape, g, w, s.cfg));
    EXPECT_NE(rows_of(a, 0, 1), rows_of(b, 0, 1));
}

TEST(Encode, ShapeNormsAndMask) {
    Toy s;
    auto w = EncoderWeights<double>::init(s.cfg, 4);
    auto m = encode_text("ibihe bikoresho mu kigali .", Role::DOCUMENT, w, s.cfg, s.pipe);
    const auto words = s.features("ibihe bikoresho mu kigali .").size();
    ASSERT_EQ(m.length(), words + 1);
    EXPECT_EQ(m.rows.size(), m.length() * s.cfg.embed_dim);
    for (std::size_t i = 0; i < m.length(); ++i) {
        double ss = 0;
        for (std::size_t j = 0; j < m.dim; ++j) ss += double(m.row(i)[j]) * m.row(i)[j];
        EXPECT_NEAR(std::sqrt(ss), 1.0, 1e-5);
    }
    EXPECT_FALSE(m.mask[0]);
    EXPECT_TRUE(m.mask[1]);
    EXPECT_FALSE(m.mask[3]);       // mu
    EXPECT_FALSE(m.mask.back());   // .
}

TEST(Encode, DeterministicAndRoleSensitive) {
    Toy s;
    auto w = EncoderWeights<float>::init(s.cfg, 5);
    const std::string text = "inkoko nziza bishobora";
    auto a = encode_text(text, Role::QUERY, w, s.cfg, s.pipe);
    auto b = encode_text(text, Role::QUERY, w, s.cfg, s.pipe);
    EXPECT_EQ(a, b);
    auto d = encode_text(text, Role::DOCUMENT, w, s.cfg, s.pipe);
    EXPECT_NE(a.rows, d.rows);
}

TEST(Encode, OverLengthInputIsLengthError) {
    Toy s;
    auto w = EncoderWeights<float>::init(s.cfg, 6);
    std::string text;
    for (std::size_t i = 0; i < s.cfg.max_seq_len; ++i) text += "ibihe ";
    try {
        encode_text(text, Role::QUERY, w, s.cfg, s.pipe);
        FAIL() << "expected LengthError";
    } catch (const LengthError& e) {
        EXPECT_NE(std::string(e.what()).find(std::to_string(s.cfg.max_seq_len + 1)), std::string::npos);
    }
}

TEST(Encode, UnknownIdsAreVocabErrors) {
    Toy s;
    auto w = EncoderWeights<float>::init(s.cfg, 7);
    auto f = s.features("ibihe");
    f[0].stem = s.cfg.stem_vocab;
    EXPECT_THROW(encode(f, Role::QUERY, w, s.cfg), VocabError);
    morph::AnalyzedText bogus{{{"x", "nope", {}, morph::Pos::NOUN, "N1", false}}, "x"};
    EXPECT_THROW(featurize(bogus, s.lex, s.bpe, {}, s.cfg), VocabError);
}

TEST(Encode, EveryEncoderBlockReceivesGradient) {
    Toy s;
    auto w = EncoderWeights<double>::init(s.cfg, 8);
    num::Tape<double> tape;
    auto fr = forward(tape, s.features("ibihe kwifashishwa mu musanze 2024 bikoresho ."), Role::QUERY, w, s.cfg);
    std::mt19937_64 rng(1);
    std::normal_distribution<double> n;
    std::vector<double> probe(fr.embeddings.size());
    for (auto& v : probe) v = n(rng);
    auto loss = num::sum(tape, num::mul(tape, fr.embeddings, num::Tensor<double>(fr.embeddings.shape(), probe)));
    auto grads = tape.backward(loss);
    for (const auto& [name, t] : w.blocks()) {
        if (name.rfind("mlm.", 0) == 0) continue;
        double norm = 0;
        for (double g : grads.grad_of(t)) norm += g * g;
        EXPECT_GT(std::sqrt(norm), 1e-12) << name;
    }
}

TEST(EncoderWeights, CheckpointRoundTripIsBitIdentical) {
    Toy s;
    auto w = EncoderWeights<float>::init(s.cfg, 9);
    const auto path = (std::filesystem::temp_directory_path() / "kcb_encoder_ckpt.bin").string();
    w.save(path);
    auto again = EncoderWeights<float>::load(path, s.cfg);
    ASSERT_EQ(again.blocks().size(), w.blocks().size());
    for (std::size_t i = 0; i < w.blocks().size(); ++i) {
        const auto& a = w.blocks()[i].second.data();
        const auto& b = again.blocks()[i].second.data();
        EXPECT_EQ(std::memcmp(a.data(), b.data(), a.size_bytes()), 0) << w.blocks()[i].first;
    }
    auto other = s.cfg;
    other.embed_dim = 4;
    EXPECT_THROW(EncoderWeights<float>::load(path, other), FormatError);
    std::filesystem::remove(path);
}
