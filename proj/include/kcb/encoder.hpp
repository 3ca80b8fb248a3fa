#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "kcb/error.hpp"
#include "kcb/kv_config.hpp"
#include "kcb/morphology.hpp"
#include "kcb/num/checkpoint.hpp"
#include "kcb/num/ops.hpp"

namespace kcb::enc {

enum class Role : std::size_t { QUERY = 0, DOCUMENT = 1 };

// Slot kinds inside one word for the morphology tier.
enum class Slot : std::size_t { STEM = 0, AFFIX = 1, POS = 2, TAG = 3 };

struct EncoderConfig {
    std::size_t morph_layers = 2;
    std::size_t morph_dim = 32;
    std::size_t morph_heads = 4;
    std::size_t seq_layers = 2;
    std::size_t seq_dim = 96;
    std::size_t seq_heads = 4;
    std::size_t ffn_mult = 4;
    std::size_t embed_dim = 32;
    std::size_t max_seq_len = 128;
    std::size_t max_affixes = 8;
    double dropout = 0.0;
    // Embedding table heights, including the reserved MASK row 0.
    std::size_t stem_vocab = 0;
    std::size_t affix_vocab = 0;
    std::size_t pos_vocab = morph::kPosCount + 1;
    std::size_t tag_vocab = 0;
    std::size_t unit_vocab = 0;

    void validate() const {
        auto fail = [](const std::string& m) { throw ConfigError("encoder config: " + m); };
        if (seq_dim != 3 * morph_dim) fail("seq_dim must equal 3 x morph_dim");
        if (morph_heads == 0 || morph_dim % morph_heads) fail("morph_dim must be divisible by morph_heads");
        if (seq_heads == 0 || seq_dim % seq_heads) fail("seq_dim must be divisible by seq_heads");
        if (embed_dim < 1) fail("embed_dim must be >= 1");
        if (ffn_mult < 1) fail("ffn_mult must be >= 1");
        if (max_seq_len < 2) fail("max_seq_len must be >= 2");
        if (dropout < 0.0 || dropout >= 1.0) fail("dropout must lie in [0, 1)");
        if (stem_vocab < 2 || tag_vocab < 2 || unit_vocab < 1 || affix_vocab < 1 || pos_vocab < 2) {
            fail("vocabulary sizes not set");
        }
    }

    // Vocabulary sizes taken from a lexicon and BPE model.
    void set_vocab(const morph::Lexicon& lexicon, const morph::BpeModel& bpe) {
        stem_vocab = lexicon.stems().id_space();
        affix_vocab = lexicon.affixes().id_space();
        tag_vocab = lexicon.tags().id_space();
        pos_vocab = morph::kPosCount + 1;
        unit_vocab = bpe.units().id_space();
    }

    KvConfig to_kv() const {
        KvConfig kv;
        auto put = [&](const char* k, auto v) { kv.set(k, std::to_string(v)); };
        put("morph_layers", morph_layers);
        put("morph_dim", morph_dim);
        put("morph_heads", morph_heads);
        put("seq_layers", seq_layers);
        put("seq_dim", seq_dim);
        put("seq_heads", seq_heads);
        put("ffn_mult", ffn_mult);
        put("embed_dim", embed_dim);
        put("max_seq_len", max_seq_len);
        put("max_affixes", max_affixes);
        kv.set("dropout", format_double(dropout));
        put("stem_vocab", stem_vocab);
        put("affix_vocab", affix_vocab);
        put("pos_vocab", pos_vocab);
        put("tag_vocab", tag_vocab);
        put("unit_vocab", unit_vocab);
        return kv;
    }

    static EncoderConfig from_kv(const KvConfig& kv) { return EncoderConfig{}.with_overrides(kv); }

    // Keys present in `kv` replace the current values.
    EncoderConfig with_overrides(const KvConfig& kv) const {
        EncoderConfig base = *this;
        auto get = [&](const char* k, std::size_t& v) { v = kv.get<std::size_t>(k, v); };
        get("morph_layers", base.morph_layers);
        get("morph_dim", base.morph_dim);
        get("morph_heads", base.morph_heads);
        get("seq_layers", base.seq_layers);
        get("seq_dim", base.seq_dim);
        get("seq_heads", base.seq_heads);
        get("ffn_mult", base.ffn_mult);
        get("embed_dim", base.embed_dim);
        get("max_seq_len", base.max_seq_len);
        get("max_affixes", base.max_affixes);
        base.dropout = kv.get<double>("dropout", base.dropout);
        get("stem_vocab", base.stem_vocab);
        get("affix_vocab", base.affix_vocab);
        get("pos_vocab", base.pos_vocab);
        get("tag_vocab", base.tag_vocab);
        get("unit_vocab", base.unit_vocab);
        return base;
    }

    static std::string format_double(double v) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.17g", v);
        return buf;
    }
};

// Vocabulary ids of one analyzed word.
struct WordFeatures {
    bool fallback = false;
    std::size_t stem = 0;  // lexicon stem id, or BPE unit id when fallback
    std::vector<std::size_t> affixes;
    std::size_t pos = 0;
    std::size_t tag = 0;
    bool scoring = true;
};

inline std::vector<WordFeatures> featurize(const morph::AnalyzedText& text, const morph::Lexicon& lexicon,
                                           const morph::BpeModel& bpe, const morph::ScoringFilter& filter,
                                           const EncoderConfig& cfg) {
    std::vector<WordFeatures> out;
    out.reserve(text.words.size());
    for (const auto& w : text.words) {
        WordFeatures f;
        f.fallback = w.is_fallback;
        if (w.is_fallback) {
            f.stem = bpe.unit_id(w.stem);
        } else {
            auto id = lexicon.stems().find(w.stem);
            if (!id) throw VocabError("stem '" + w.stem + "' of '" + w.surface + "' not in lexicon");
            f.stem = *id;
        }
        for (std::size_t i = 0; i < w.affixes.size() && i < cfg.max_affixes; ++i) {
            auto id = lexicon.affixes().find(w.affixes[i]);
            if (!id) throw VocabError("affix '" + w.affixes[i] + "' of '" + w.surface + "' not in lexicon");
            f.affixes.push_back(*id);
        }
        f.pos = static_cast<std::size_t>(w.pos) + 1;
        auto tag = lexicon.tags().find(w.morph_tag);
        if (!tag) throw VocabError("morph tag '" + w.morph_tag + "' of '" + w.surface + "' not in lexicon");
        f.tag = *tag;
        f.scoring = morph::is_scoring_token(w, filter);
        out.push_back(std::move(f));
    }
    return out;
}

// Per-token output of an encode call. Row 0 is the role token.
struct TokenEmbeddingMatrix {
    std::size_t dim = 0;
    std::vector<float> rows;  // L x dim, row-major
    std::vector<bool> mask;   // true = participates in scoring
    std::string doc_id;

    std::size_t length() const { return mask.size(); }
    const float* row(std::size_t i) const { return rows.data() + i * dim; }

    friend bool operator==(const TokenEmbeddingMatrix&, const TokenEmbeddingMatrix&) = default;
};

// All parameters of the two-tier network plus the pretraining heads, held
// as an ordered list of named blocks.
template <class T>
class EncoderWeights {
public:
    using Tensor = num::Tensor<T>;

    static EncoderWeights init(const EncoderConfig& cfg, std::uint64_t seed) {
        cfg.validate();
        EncoderWeights w;
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> normal(0.0, 1.0);
        auto randn = [&](num::Shape shape, double stddev) {
            std::vector<T> v(num::numel(shape));
            for (auto& x : v) x = T(normal(rng) * stddev);
            return Tensor(std::move(shape), std::move(v), true);
        };
        auto constant = [](num::Shape shape, T value) {
            return Tensor(shape, std::vector<T>(num::numel(shape), value), true);
        };
        const std::size_t md = cfg.morph_dim, sd = cfg.seq_dim;
        const double init_std = 0.02;
        w.add("morph.stem_emb", randn({cfg.stem_vocab, md}, 1.0));
        w.add("morph.unit_emb", randn({cfg.unit_vocab, md}, 1.0));
        w.add("morph.affix_emb", randn({cfg.affix_vocab, md}, 1.0));
        w.add("morph.pos_emb", randn({cfg.pos_vocab, md}, 1.0));
        w.add("morph.tag_emb", randn({cfg.tag_vocab, md}, 1.0));
        w.add("morph.slot_emb", randn({4, md}, 1.0));
        auto add_block = [&](const std::string& prefix, std::size_t d) {
            const std::size_t ff = cfg.ffn_mult * d;
            w.add(prefix + ".ln1.gain", constant({d}, T(1)));
            w.add(prefix + ".ln1.bias", constant({d}, T(0)));
            w.add(prefix + ".qkv.weight", randn({d, 3 * d}, init_std));
            w.add(prefix + ".qkv.bias", constant({3 * d}, T(0)));
            w.add(prefix + ".attn_out.weight", randn({d, d}, init_std));
            w.add(prefix + ".attn_out.bias", constant({d}, T(0)));
            w.add(prefix + ".ln2.gain", constant({d}, T(1)));
            w.add(prefix + ".ln2.bias", constant({d}, T(0)));
            w.add(prefix + ".ff1.weight", randn({d, ff}, init_std));
            w.add(prefix + ".ff1.bias", constant({ff}, T(0)));
            w.add(prefix + ".ff2.weight", randn({ff, d}, init_std));
            w.add(prefix + ".ff2.bias", constant({d}, T(0)));
        };
        for (std::size_t l = 0; l < cfg.morph_layers; ++l) add_block("morph.layer" + std::to_string(l), md);
        w.add("morph.final_ln.gain", constant({md}, T(1)));
        w.add("morph.final_ln.bias", constant({md}, T(0)));
        w.add("seq.role_emb", randn({2, sd}, 1.0));
        for (std::size_t l = 0; l < cfg.seq_layers; ++l) add_block("seq.layer" + std::to_string(l), sd);
        w.add("seq.final_ln.gain", constant({sd}, T(1)));
        w.add("seq.final_ln.bias", constant({sd}, T(0)));
        w.add("proj.weight", randn({sd, cfg.embed_dim}, 1.0 / std::sqrt(double(sd))));
        w.add("mlm.stem.weight", randn({sd, cfg.stem_vocab + cfg.unit_vocab}, init_std));
        w.add("mlm.stem.bias", constant({cfg.stem_vocab + cfg.unit_vocab}, T(0)));
        w.add("mlm.pos.weight", randn({sd, cfg.pos_vocab}, init_std));
        w.add("mlm.pos.bias", constant({cfg.pos_vocab}, T(0)));
        w.add("mlm.tag.weight", randn({sd, cfg.tag_vocab}, init_std));
        w.add("mlm.tag.bias", constant({cfg.tag_vocab}, T(0)));
        w.add("mlm.affix.weight", randn({sd, cfg.affix_vocab}, init_std));
        w.add("mlm.affix.bias", constant({cfg.affix_vocab}, T(0)));
        return w;
    }

    const Tensor& operator[](const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw ConfigError("no parameter block named '" + name + "'");
        return blocks_[it->second].second;
    }
    Tensor& operator[](const std::string& name) {
        return const_cast<Tensor&>(static_cast<const EncoderWeights&>(*this)[name]);
    }

    bool has(const std::string& name) const { return index_.count(name) != 0; }
    const std::vector<std::pair<std::string, Tensor>>& blocks() const { return blocks_; }
    std::vector<std::pair<std::string, Tensor>>& blocks() { return blocks_; }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& [_, t] : blocks_) n += t.size();
        return n;
    }

    std::vector<num::NamedBlock> to_blocks() const {
        std::vector<num::NamedBlock> out;
        for (const auto& [name, t] : blocks_) {
            std::vector<float> v(t.data().begin(), t.data().end());
            out.push_back({name, t.shape(), std::move(v)});
        }
        return out;
    }

    // Blocks must match the layout `init(cfg)` produces, name for name.
    static EncoderWeights from_blocks(const std::vector<num::NamedBlock>& blocks, const EncoderConfig& cfg) {
        auto reference = init(cfg, 0);
        if (blocks.size() != reference.blocks_.size()) {
            throw FormatError("checkpoint has " + std::to_string(blocks.size()) + " blocks, config expects " +
                              std::to_string(reference.blocks_.size()));
        }
        EncoderWeights w;
        for (std::size_t i = 0; i < blocks.size(); ++i) {
            const auto& [ref_name, ref] = reference.blocks_[i];
            if (blocks[i].name != ref_name || blocks[i].shape != ref.shape()) {
                throw FormatError("checkpoint block " + std::to_string(i) + " is '" + blocks[i].name + "' " +
                                  num::shape_str(blocks[i].shape) + ", config expects '" + ref_name + "' " +
                                  num::shape_str(ref.shape()));
            }
            std::vector<T> v(blocks[i].values.begin(), blocks[i].values.end());
            w.add(ref_name, Tensor(blocks[i].shape, std::move(v), true));
        }
        return w;
    }

    void save(const std::string& path) const { num::save_checkpoint(path, to_blocks()); }
    static EncoderWeights load(const std::string& path, const EncoderConfig& cfg) {
        return from_blocks(num::load_checkpoint(path), cfg);
    }

    // Deep copy; the copy's tensors do not share storage with this one.
    EncoderWeights clone() const {
        EncoderWeights w;
        for (const auto& [name, t] : blocks_) {
            std::vector<T> v(t.data().begin(), t.data().end());
            w.add(name, Tensor(t.shape(), std::move(v), true));
        }
        return w;
    }

    template <class U>
    EncoderWeights<U> cast() const {
        EncoderWeights<U> w;
        for (const auto& [name, t] : blocks_) {
            std::vector<U> v(t.data().begin(), t.data().end());
            w.add(name, num::Tensor<U>(t.shape(), std::move(v), true));
        }
        return w;
    }

    void add(const std::string& name, Tensor t) {
        if (index_.count(name)) throw ConfigError("duplicate parameter block '" + name + "'");
        index_[name] = blocks_.size();
        blocks_.emplace_back(name, std::move(t));
    }

private:
    std::vector<std::pair<std::string, Tensor>> blocks_;
    std::map<std::string, std::size_t> index_;
};

// Sinusoidal positional table, rows = positions.
template <class T>
std::vector<T> sinusoidal_positions(std::size_t length, std::size_t dim) {
    std::vector<T> pe(length * dim);
    for (std::size_t p = 0; p < length; ++p) {
        for (std::size_t i = 0; i < dim; ++i) {
            const double freq = std::pow(10000.0, -double(2 * (i / 2)) / double(dim));
            const double angle = double(p) * freq;
            pe[p * dim + i] = T(i % 2 == 0 ? std::sin(angle) : std::cos(angle));
        }
    }
    return pe;
}

// Controls dropout during a forward pass.
struct ForwardMode {
    bool training = false;
    std::mt19937_64* rng = nullptr;
};

namespace detail {

template <class T>
num::Tensor<T> transformer_block(num::Tape<T>& tape, const EncoderWeights<T>& w, const std::string& prefix,
                                 const num::Tensor<T>& x, std::size_t heads, std::span<const std::size_t> bounds,
                                 double dropout, const ForwardMode& mode) {
    using namespace num;
    auto maybe_drop = [&](const Tensor<T>& t) {
        if (!mode.training || dropout <= 0.0 || mode.rng == nullptr) return t;
        return num::dropout(tape, t, dropout, true, *mode.rng);
    };
    auto h = layer_norm(tape, x, w[prefix + ".ln1.gain"], w[prefix + ".ln1.bias"]);
    auto qkv = linear(tape, h, w[prefix + ".qkv.weight"], w[prefix + ".qkv.bias"]);
    auto attn = segmented_attention(tape, qkv, heads, bounds);
    auto x1 = add(tape, x, maybe_drop(linear(tape, attn, w[prefix + ".attn_out.weight"], w[prefix + ".attn_out.bias"])));
    auto h2 = layer_norm(tape, x1, w[prefix + ".ln2.gain"], w[prefix + ".ln2.bias"]);
    auto ff = gelu(tape, linear(tape, h2, w[prefix + ".ff1.weight"], w[prefix + ".ff1.bias"]));
    return add(tape, x1, maybe_drop(linear(tape, ff, w[prefix + ".ff2.weight"], w[prefix + ".ff2.bias"])));
}

inline void check_ids(const std::vector<WordFeatures>& words, const EncoderConfig& cfg) {
    for (const auto& f : words) {
        const std::size_t stem_limit = f.fallback ? cfg.unit_vocab : cfg.stem_vocab;
        if (f.stem >= stem_limit) throw VocabError("stem id " + std::to_string(f.stem) + " out of vocabulary");
        for (auto a : f.affixes)
            if (a >= cfg.affix_vocab) throw VocabError("affix id " + std::to_string(a) + " out of vocabulary");
        if (f.pos >= cfg.pos_vocab) throw VocabError("POS id " + std::to_string(f.pos) + " out of vocabulary");
        if (f.tag >= cfg.tag_vocab) throw VocabError("tag id " + std::to_string(f.tag) + " out of vocabulary");
    }
}

}  // namespace detail

// Output of the morphology tier: one row per slot, words packed back to
// back. Word i owns rows [bounds[i], bounds[i+1]); its stem slot is first,
// then affixes, then the POS and tag slots.
template <class T>
struct MorphologyEncoding {
    num::Tensor<T> slots;
    std::vector<std::size_t> bounds;

    std::size_t words() const { return bounds.size() - 1; }
    std::size_t stem_row(std::size_t i) const { return bounds[i]; }
    std::size_t pos_row(std::size_t i) const { return bounds[i + 1] - 2; }
    std::size_t tag_row(std::size_t i) const { return bounds[i + 1] - 1; }
};

template <class T>
MorphologyEncoding<T> encode_morphology(num::Tape<T>& tape, const std::vector<WordFeatures>& words,
                                        const EncoderWeights<T>& w, const EncoderConfig& cfg,
                                        const ForwardMode& mode = {}) {
    using namespace num;
    detail::check_ids(words, cfg);
    std::vector<std::size_t> stem_ids, unit_ids, affix_ids, pos_ids, tag_ids;
    for (const auto& f : words) {
        (f.fallback ? unit_ids : stem_ids).push_back(f.stem);
        for (std::size_t i = 0; i < f.affixes.size() && i < cfg.max_affixes; ++i) affix_ids.push_back(f.affixes[i]);
        pos_ids.push_back(f.pos);
        tag_ids.push_back(f.tag);
    }
    // Rows of `values` are laid out table by table; `order` interleaves them
    // back into per-word slot order.
    const std::size_t unit_base = stem_ids.size();
    const std::size_t affix_base = unit_base + unit_ids.size();
    const std::size_t pos_base = affix_base + affix_ids.size();
    const std::size_t tag_base = pos_base + pos_ids.size();
    std::vector<std::size_t> order, slot_types, bounds{0};
    std::size_t next_stem = 0, next_unit = 0, next_affix = 0;
    for (std::size_t i = 0; i < words.size(); ++i) {
        const auto& f = words[i];
        order.push_back(f.fallback ? unit_base + next_unit++ : next_stem++);
        slot_types.push_back(std::size_t(Slot::STEM));
        for (std::size_t a = 0; a < f.affixes.size() && a < cfg.max_affixes; ++a) {
            order.push_back(affix_base + next_affix++);
            slot_types.push_back(std::size_t(Slot::AFFIX));
        }
        order.push_back(pos_base + i);
        slot_types.push_back(std::size_t(Slot::POS));
        order.push_back(tag_base + i);
        slot_types.push_back(std::size_t(Slot::TAG));
        bounds.push_back(order.size());
    }
    std::vector<Tensor<T>> parts;
    auto gather_into = [&](const char* table, const std::vector<std::size_t>& ids) {
        if (!ids.empty()) parts.push_back(gather_rows(tape, w[table], std::span<const std::size_t>(ids)));
    };
    gather_into("morph.stem_emb", stem_ids);
    gather_into("morph.unit_emb", unit_ids);
    gather_into("morph.affix_emb", affix_ids);
    gather_into("morph.pos_emb", pos_ids);
    gather_into("morph.tag_emb", tag_ids);
    auto values = concat_rows(tape, parts);
    auto x = add(tape, gather_rows(tape, values, std::span<const std::size_t>(order)),
                 gather_rows(tape, w["morph.slot_emb"], std::span<const std::size_t>(slot_types)));
    for (std::size_t l = 0; l < cfg.morph_layers; ++l) {
        x = detail::transformer_block(tape, w, "morph.layer" + std::to_string(l), x, cfg.morph_heads,
                                      std::span<const std::size_t>(bounds), cfg.dropout, mode);
    }
    x = layer_norm(tape, x, w["morph.final_ln.gain"], w["morph.final_ln.bias"]);
    return {x, std::move(bounds)};
}

// Inflected-form embeddings: stem ‖ POS ‖ tag slot encodings, one row per
// word, 3 x morph_dim wide.
template <class T>
num::Tensor<T> compose_word_embedding(num::Tape<T>& tape, const MorphologyEncoding<T>& m) {
    std::vector<std::size_t> stem_rows, pos_rows, tag_rows;
    for (std::size_t i = 0; i < m.words(); ++i) {
        stem_rows.push_back(m.stem_row(i));
        pos_rows.push_back(m.pos_row(i));
        tag_rows.push_back(m.tag_row(i));
    }
    return num::concat_cols(tape, std::vector<num::Tensor<T>>{
                                      num::gather_rows(tape, m.slots, std::span<const std::size_t>(stem_rows)),
                                      num::gather_rows(tape, m.slots, std::span<const std::size_t>(pos_rows)),
                                      num::gather_rows(tape, m.slots, std::span<const std::size_t>(tag_rows))});
}

template <class T>
struct ForwardResult {
    num::Tensor<T> hidden;      // (W+1) x seq_dim, after the final layer norm
    num::Tensor<T> embeddings;  // (W+1) x embed_dim, unit rows
    std::vector<bool> mask;
};

template <class T>
ForwardResult<T> forward(num::Tape<T>& tape, const std::vector<WordFeatures>& words, Role role,
                         const EncoderWeights<T>& w, const EncoderConfig& cfg, const ForwardMode& mode = {}) {
    using namespace num;
    if (words.empty()) throw EmptyInput("encode: no words");
    const std::size_t length = words.size() + 1;
    if (length > cfg.max_seq_len) {
        throw LengthError("input has " + std::to_string(length) + " tokens including the role token, limit is " +
                          std::to_string(cfg.max_seq_len));
    }
    auto morph = encode_morphology(tape, words, w, cfg, mode);
    auto word_vecs = compose_word_embedding(tape, morph);
    const std::size_t role_id = static_cast<std::size_t>(role);
    auto role_row = gather_rows(tape, w["seq.role_emb"], std::span<const std::size_t>(&role_id, 1));
    auto x = concat_rows(tape, std::vector<Tensor<T>>{role_row, word_vecs});
    x = add(tape, x, Tensor<T>({length, cfg.seq_dim}, sinusoidal_positions<T>(length, cfg.seq_dim)));
    const std::size_t bounds[2] = {0, length};
    for (std::size_t l = 0; l < cfg.seq_layers; ++l) {
        x = detail::transformer_block(tape, w, "seq.layer" + std::to_string(l), x, cfg.seq_heads,
                                      std::span<const std::size_t>(bounds), cfg.dropout, mode);
    }
    auto hidden = layer_norm(tape, x, w["seq.final_ln.gain"], w["seq.final_ln.bias"]);
    auto emb = l2_normalize_rows(tape, matmul(tape, hidden, w["proj.weight"]));
    std::vector<bool> mask(length, false);
    for (std::size_t i = 0; i < words.size(); ++i) mask[i + 1] = words[i].scoring;
    return {hidden, emb, std::move(mask)};
}

// Inference encode. Rows are converted to float.
template <class T>
TokenEmbeddingMatrix encode(const std::vector<WordFeatures>& words, Role role, const EncoderWeights<T>& w,
                            const EncoderConfig& cfg) {
    num::Tape<T> tape;
    auto fr = forward(tape, words, role, w, cfg);
    TokenEmbeddingMatrix m;
    m.dim = cfg.embed_dim;
    m.rows.assign(fr.embeddings.data().begin(), fr.embeddings.data().end());
    m.mask = std::move(fr.mask);
    return m;
}

// Inputs needed to turn raw text into encoder features.
struct TextPipeline {
    const morph::Lexicon* lexicon = nullptr;
    const morph::BpeModel* bpe = nullptr;
    morph::ScoringFilter filter;

    std::vector<WordFeatures> features(std::string_view text, const EncoderConfig& cfg) const {
        return featurize(morph::analyze(text, *lexicon, *bpe), *lexicon, *bpe, filter, cfg);
    }
};

template <class T>
TokenEmbeddingMatrix encode_text(std::string_view text, Role role, const EncoderWeights<T>& w,
                                 const EncoderConfig& cfg, const TextPipeline& pipe) {
    return encode(pipe.features(text, cfg), role, w, cfg);
}

}  // namespace kcb::enc
