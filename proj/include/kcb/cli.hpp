#pragma once

#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "kcb/error.hpp"
#include "kcb/gradcheck.hpp"
#include "kcb/workflow.hpp"

namespace kcb::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

inline int exit_code(ErrorKind k) {
    switch (k) {
        case ErrorKind::usage: return kUsage;
        case ErrorKind::data: return kData;
        case ErrorKind::numerical: return kNumerical;
    }
    return kData;
}

// Flags shared by every command.
struct CommonFlags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> threads;
    std::string in;
    std::string out;
};

struct Flags {
    CommonFlags common;
    std::optional<std::size_t> steps;
    std::optional<std::size_t> embed_dim;
    std::size_t k = 10;
    std::string text;
    std::string split = "test";
    bool inject_fault = false;
};

// Resolved inputs and outputs of one invocation.
class Context {
public:
    Context(const CommonFlags& f, std::ostream& out, std::ostream& err) : flags_(f), out_(out), err_(err) {
        rc_ = flow::RunConfig::load(f.config);
        if (f.seed) rc_ = rc_.with_seed(*f.seed);
        if (f.threads) {
            if (*f.threads < 1) throw ConfigError("--threads must be >= 1");
            rc_.threads = *f.threads;
        }
    }

    const flow::RunConfig& rc() const { return rc_; }
    flow::RunConfig& rc() { return rc_; }
    std::ostream& out() { return out_; }
    std::ostream& err() { return err_; }

    // A `path.<name>` config key wins; otherwise the file is looked up in
    // --out and then in --in.
    std::string input(const std::string& file) const {
        const auto key = "path." + file.substr(0, file.find('.'));
        if (rc_.kv.has(key)) return rc_.kv.get_string(key, "");
        namespace fs = std::filesystem;
        if (!flags_.out.empty() && fs::exists(fs::path(flags_.out) / file)) return (fs::path(flags_.out) / file).string();
        const auto dir = flags_.in.empty() ? flags_.out : flags_.in;
        if (dir.empty()) throw ConfigError("no --in or --out directory to read '" + file + "' from");
        return (fs::path(dir) / file).string();
    }

    std::string output(const std::string& file) const {
        if (flags_.out.empty()) throw ConfigError("--out is required");
        std::filesystem::create_directories(flags_.out);
        return (std::filesystem::path(flags_.out) / file).string();
    }

    bool has_out() const { return !flags_.out.empty(); }

    morph::Lexicon lexicon() const { return morph::Lexicon::load(input(flow::files::lexicon)); }
    morph::BpeModel bpe() const { return morph::BpeModel::load(input(flow::files::bpe)); }

    std::pair<enc::EncoderConfig, enc::EncoderWeights<float>> weights(const char* file, const morph::Lexicon& lex,
                                                                     const morph::BpeModel& bpe) const {
        return flow::load_weights(input(file), flow::encoder_config(rc_, lex, bpe));
    }

    std::string header(const std::string& what) const { return flow::header(what, rc_.seed); }

    // Key=value sidecar describing a binary artifact.
    void write_meta(const std::string& file, const KvConfig& extra) const {
        KvConfig kv = extra;
        kv.set("version", flow::kVersion);
        kv.set("seed", std::to_string(rc_.seed));
        eval::write_text_file(output(file + ".meta"), header(file) + kv.to_string());
    }

private:
    CommonFlags flags_;
    flow::RunConfig rc_;
    std::ostream& out_;
    std::ostream& err_;
};

namespace commands {

inline std::string with_header(const std::string& header, const std::string& body) { return header + body; }

inline void synth(Context& ctx) {
    const auto& rc = ctx.rc();
    auto data = synth::generate(rc.synth);
    const auto split = flow::assign_splits(data.queries, rc);
    const auto triplets = flow::training_triplets(split, data.corpus, rc);
    eval::write_text_file(ctx.output(flow::files::lexicon), ctx.header("lexicon") + data.lexicon.to_text());
    eval::write_text_file(ctx.output(flow::files::corpus), ctx.header("corpus") + eval::corpus_to_text(data.corpus));
    eval::write_text_file(ctx.output(flow::files::queries), ctx.header("queries") + eval::queries_to_text(data.queries));
    eval::write_text_file(ctx.output(flow::files::triplets),
                          ctx.header("triplets") + eval::triplets_to_text(triplets));
    ctx.out() << "synth: " << data.lexicon.entries().size() << " lexicon entries, " << data.corpus.size()
              << " topics, " << data.queries.size() << " queries, " << triplets.size() << " training triplets\n";
}

inline void train_bpe(Context& ctx) {
    const auto lex = ctx.lexicon();
    const auto corpus = eval::load_corpus(ctx.input(flow::files::corpus));
    const auto bpe = flow::learn_bpe(corpus, lex, ctx.rc().bpe_merges);
    auto text = bpe.to_text();
    const auto nl = text.find('\n') + 1;
    text.insert(nl, ctx.header("bpe"));
    eval::write_text_file(ctx.output(flow::files::bpe), text);
    ctx.out() << "train-bpe: " << bpe.merges().size() << " merges, " << bpe.units().size() << " units\n";
}

inline void analyze(Context& ctx, const Flags& f) {
    if (f.text.empty()) throw ConfigError("--text is required");
    const auto lex = ctx.lexicon();
    const auto bpe = ctx.bpe();
    for (const auto& w : morph::analyze(f.text, lex, bpe).words) {
        std::string affixes;
        for (const auto& a : w.affixes) affixes += (affixes.empty() ? "" : ",") + a;
        ctx.out() << w.surface << '\t' << w.stem << '\t' << affixes << '\t' << morph::pos_name(w.pos) << '\t'
                  << w.morph_tag << '\t' << (w.is_fallback ? "fallback" : "lexicon") << '\n';
    }
}

inline void pretrain(Context& ctx, const Flags& f) {
    auto& rc = ctx.rc();
    if (f.steps) flow::set_pretrain_steps(rc.pretrain, *f.steps);
    flow::Dataset d{ctx.lexicon(), ctx.bpe(), eval::load_corpus(ctx.input(flow::files::corpus)), {}};
    std::ofstream log(ctx.output("pretrain.log"), std::ios::binary);
    log << ctx.header("pretrain log") << "# step\tlr\tloss\n";
    auto m = flow::pretrain_stage(d, rc, {&log, rc.threads, ""});
    m.weights.save(ctx.output(flow::files::pretrained));
    auto meta = m.cfg.to_kv();
    meta.set("steps", std::to_string(rc.pretrain.total_steps));
    ctx.write_meta(flow::files::pretrained, meta);
    ctx.out() << "pretrain: " << rc.pretrain.total_steps << " steps, " << m.weights.parameter_count()
              << " parameters\n";
}

inline void finetune(Context& ctx, const Flags& f) {
    auto& rc = ctx.rc();
    if (f.steps) flow::set_finetune_steps(rc.finetune, *f.steps);
    const auto lex = ctx.lexicon();
    const auto bpe = ctx.bpe();
    auto [cfg, w] = ctx.weights(flow::files::pretrained, lex, bpe);
    const std::size_t embed_dim = f.embed_dim.value_or(rc.encoder.embed_dim);
    if (embed_dim < 1) throw ConfigError("--embed-dim must be >= 1");
    cfg.embed_dim = embed_dim;
    w = flow::with_embed_dim(w, embed_dim, mix_seed(rc.seed, 14));
    const auto corpus = eval::load_corpus(ctx.input(flow::files::corpus));
    const auto queries = eval::load_queries(ctx.input(flow::files::queries));
    const auto triplets = eval::load_triplets(ctx.input(flow::files::triplets));
    enc::TextPipeline pipe{&lex, &bpe, {}};
    const auto bank = flow::feature_bank(triplets, queries, corpus, pipe, cfg);
    std::ofstream log(ctx.output("finetune.log"), std::ios::binary);
    log << ctx.header("finetune log") << "# step\tlr\tloss\n";
    train::finetune(w, cfg, rc.finetune, triplets, bank, {&log, rc.threads, ""});
    w.save(ctx.output(flow::files::finetuned));
    auto meta = cfg.to_kv();
    meta.set("steps", std::to_string(rc.finetune.total_steps));
    ctx.write_meta(flow::files::finetuned, meta);
    ctx.out() << "finetune: " << rc.finetune.total_steps << " steps, embed_dim " << embed_dim << ", "
              << triplets.size() << " triplets\n";
}

inline void build_index(Context& ctx) {
    const auto lex = ctx.lexicon();
    const auto bpe = ctx.bpe();
    const auto [cfg, w] = ctx.weights(flow::files::finetuned, lex, bpe);
    enc::TextPipeline pipe{&lex, &bpe, {}};
    const auto ix = index::build_index(eval::load_corpus(ctx.input(flow::files::corpus)), w, cfg, pipe, ctx.rc().threads);
    index::save_index(ix, ctx.output(flow::files::index));
    KvConfig meta;
    meta.set("documents", std::to_string(ix.size()));
    meta.set("embed_dim", std::to_string(ix.embed_dim));
    ctx.write_meta(flow::files::index, meta);
    ctx.out() << "build-index: " << ix.size() << " documents, embed_dim " << ix.embed_dim << "\n";
}

inline void search(Context& ctx, const Flags& f) {
    if (f.text.empty()) throw ConfigError("--query is required");
    if (f.k < 1) throw ConfigError("--k must be >= 1");
    const auto lex = ctx.lexicon();
    const auto bpe = ctx.bpe();
    const auto [cfg, w] = ctx.weights(flow::files::finetuned, lex, bpe);
    enc::TextPipeline pipe{&lex, &bpe, {}};
    const auto ix = index::load_index(ctx.input(flow::files::index));
    const auto hits = index::retrieve(f.text, ix, f.k, w, cfg, pipe);
    char line[64];
    for (std::size_t i = 0; i < hits.size(); ++i) {
        std::snprintf(line, sizeof line, "%.6f", hits[i].score.value);
        ctx.out() << (i + 1) << '\t' << hits[i].doc_id << '\t' << line << '\n';
    }
}

inline void evaluate(Context& ctx, const Flags& f) {
    const auto split = eval::parse_split(f.split);
    const auto lex = ctx.lexicon();
    const auto bpe = ctx.bpe();
    const auto [cfg, w] = ctx.weights(flow::files::finetuned, lex, bpe);
    enc::TextPipeline pipe{&lex, &bpe, {}};
    const auto ix = index::load_index(ctx.input(flow::files::index));
    const auto queries = flow::assign_splits(eval::load_queries(ctx.input(flow::files::queries)), ctx.rc());
    const auto m = eval::evaluate(w, cfg, pipe, ix, eval::queries_in(queries, split), ctx.rc().threads);
    if (m.n_empty) ctx.err() << "warning: " << m.n_empty << " queries retrieved nothing\n";
    if (m.n_unscorable) ctx.err() << "warning: " << m.n_unscorable << " queries had no scoring tokens\n";
    eval::write_text_file(ctx.output(flow::files::metrics),
                          ctx.header(std::string("metrics split=") + eval::split_name(split)) + m.to_text());
    ctx.out() << m.to_text();
}

inline int gradcheck(Context& ctx, const Flags& f) {
    gradcheck::Options opt;
    opt.seed = ctx.rc().seed;
    opt.h = ctx.rc().kv.get<double>("gradcheck.h", opt.h);
    opt.tolerance = ctx.rc().kv.get<double>("gradcheck.tolerance", opt.tolerance);
    opt.max_coords_per_block = ctx.rc().kv.get<std::size_t>("gradcheck.max_coords_per_block", 32);
    num::corrupt_gelu_backward() = f.inject_fault;
    gradcheck::Report report;
    try {
        report = gradcheck::run_tiny(ctx.rc().seed, opt);
    } catch (...) {
        num::corrupt_gelu_backward() = false;
        throw;
    }
    num::corrupt_gelu_backward() = false;
    const auto text = report.to_text();
    ctx.out() << text;
    if (ctx.has_out()) eval::write_text_file(ctx.output("gradcheck.txt"), ctx.header("gradcheck") + text);
    return report.passed() ? kOk : kNumerical;
}

}  // namespace commands

// Runs one command line; argv[0] is the program name.
inline int run(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"KinyaColBERT-style late-interaction retrieval toolkit", "kcb"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(flow::kVersion));
    Flags f;

    auto add_common = [&](CLI::App* cmd, bool out_required) {
        cmd->add_option("--config", f.common.config, "Run configuration (key=value file)")->required()->check(CLI::ExistingFile);
        cmd->add_option("--seed", f.common.seed, "Override every seed in the configuration");
        cmd->add_option("--threads", f.common.threads, "Worker thread cap");
        cmd->add_option("--in", f.common.in, "Directory holding input artifacts (default: --out)");
        auto* o = cmd->add_option("--out", f.common.out, "Output directory");
        if (out_required) o->required();
    };

    struct Command {
        CLI::App* app;
        std::function<int(Context&)> fn;
    };
    std::vector<Command> cmds;
    auto add = [&](const char* name, const char* help, bool out_required, std::function<int(Context&)> fn) {
        auto* c = app.add_subcommand(name, help);
        add_common(c, out_required);
        cmds.push_back({c, std::move(fn)});
        return c;
    };
    auto done = [](auto fn) {
        return [fn](Context& c) {
            fn(c);
            return int(kOk);
        };
    };

    add("synth", "Generate the synthetic benchmark (lexicon, corpus, queries, triplets)", true,
        done([&](Context& c) { commands::synth(c); }));
    add("train-bpe", "Learn BPE merges for out-of-lexicon tokens", true,
        done([&](Context& c) { commands::train_bpe(c); }));
    add("analyze", "Print the morphological analysis of a text", false,
        done([&](Context& c) { commands::analyze(c, f); }))
        ->add_option("--text", f.text, "Text to analyze")
        ->required();
    auto* pre = add("pretrain", "Masked-morphology pretraining", true, done([&](Context& c) { commands::pretrain(c, f); }));
    pre->add_option("--steps", f.steps, "Total optimizer steps");
    auto* ft = add("finetune", "Triplet fine-tuning from pretrained weights", true,
                   done([&](Context& c) { commands::finetune(c, f); }));
    ft->add_option("--steps", f.steps, "Total optimizer steps");
    ft->add_option("--embed-dim", f.embed_dim, "Output embedding width");
    add("build-index", "Encode the corpus into a document index", true,
        done([&](Context& c) { commands::build_index(c); }));
    auto* se = add("search", "Rank indexed documents for one query", false, done([&](Context& c) { commands::search(c, f); }));
    se->add_option("--query", f.text, "Query text")->required();
    se->add_option("--k", f.k, "Number of results");
    auto* ev = add("evaluate", "Score one query split and write a metrics report", true,
                   done([&](Context& c) { commands::evaluate(c, f); }));
    ev->add_option("--split", f.split, "train, dev, or test");
    auto* gc = add("gradcheck", "Compare tape gradients with finite differences on a tiny encoder", false,
                   [&](Context& c) { return commands::gradcheck(c, f); });
    gc->add_flag("--inject-fault", f.inject_fault, "Corrupt the gelu backward rule first");

    std::vector<const char*> cargv;
    for (const auto& a : argv) cargv.push_back(a.c_str());
    try {
        app.parse(int(cargv.size()), cargv.data());
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForVersion&) {
        out << flow::kVersion << "\n";
        return kOk;
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        err << app.help();
        return kUsage;
    }

    for (auto& c : cmds) {
        if (!c.app->parsed()) continue;
        try {
            Context ctx(f.common, out, err);
            return c.fn(ctx);
        } catch (const Error& e) {
            err << "error: " << e.what() << "\n";
            return exit_code(e.kind());
        } catch (const std::exception& e) {
            err << "error: " << e.what() << "\n";
            return kData;
        }
    }
    return kUsage;
}

}  // namespace kcb::cli
