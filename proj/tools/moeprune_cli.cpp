// Command-line driver for the expert-pruning toolkit. Artifacts live under
// --out with the same layout the pipeline subcommand produces, so the
// stage subcommands and the end-to-end pipeline are interchangeable.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "moeprune/analysis.hpp"
#include "moeprune/checkpoint.hpp"
#include "moeprune/memory.hpp"
#include "moeprune/pipeline.hpp"

namespace fs = std::filesystem;
using namespace moeprune;

namespace {

struct CommonArgs {
    std::string config_path;
    std::string out_dir;
    std::string metric, algo, granularity, split;
    double rate = -1.0;
    int min_per_layer = -1;
    long seed = -1;
    bool force = false;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool need_config = true) {
    auto* c = cmd->add_option("--config", args.config_path, "pipeline config file");
    if (need_config) c->required();
    cmd->add_option("--out", args.out_dir, "artifact directory (overrides [run] out)");
    cmd->add_option("--seed", args.seed, "seed override for data and training");
    cmd->add_flag("--force", args.force, "rebuild even when artifacts look fresh");
}

void add_prune_flags(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--metric", args.metric, "top1|top2|lb|importance-vanilla|importance");
    cmd->add_option("--algo", args.algo, "fixed|global-threshold|encdec-threshold");
    cmd->add_option("--granularity", args.granularity, "global|lang-pair|lang");
    cmd->add_option("--rate", args.rate, "fraction of experts to remove");
    cmd->add_option("--split", args.split, "balanced|ratio=E:D|explicit=E,D");
    cmd->add_option("--min-per-layer", args.min_per_layer,
                    "retained-expert floor per layer (default 4)");
}

PipelineConfig load_config(const CommonArgs& args) {
    PipelineConfig cfg = PipelineConfig::from_file(args.config_path);
    if (!args.out_dir.empty()) cfg.out_dir = args.out_dir;
    if (args.seed >= 0) {
        cfg.data.seed = static_cast<std::uint64_t>(args.seed);
        cfg.train.seed = static_cast<std::uint64_t>(args.seed);
    }
    if (!args.metric.empty()) cfg.prune.metric = metric_from_name(args.metric);
    if (!args.algo.empty()) cfg.prune.algo = algo_from_name(args.algo);
    if (!args.granularity.empty())
        cfg.prune.granularity = granularity_from_name(args.granularity);
    if (args.rate >= 0.0) cfg.prune.rate = args.rate;
    if (!args.split.empty()) cfg.prune.split = args.split;
    if (args.min_per_layer >= 0) cfg.prune.min_per_layer = args.min_per_layer;
    return cfg;
}

fs::path corpus_path(const PipelineConfig& cfg, const char* split) {
    return fs::path(cfg.out_dir) / "corpus" / (std::string(split) + ".tsv");
}

std::map<std::pair<std::string, std::string>, PruningMask> load_masks(
    const PipelineConfig& cfg) {
    fs::path dir = fs::path(cfg.out_dir) / "masks" / cfg.prune.tag();
    std::map<std::pair<std::string, std::string>, PruningMask> masks;
    for (const auto& [src, tgt] : cfg.directions())
        masks[{src, tgt}] =
            PruningMask::load_file((dir / (src + "-" + tgt + ".mask")).string());
    return masks;
}

int cmd_gen_data(const CommonArgs& args) {
    PipelineConfig cfg = load_config(args);
    fs::create_directories(fs::path(cfg.out_dir) / "corpus");
    for (const char* split : {"train", "valid", "test"}) {
        fs::path p = corpus_path(cfg, split);
        if (fs::exists(p) && !args.force)
            throw std::runtime_error("output exists (use --force): " + p.string());
    }
    GeneratedCorpus corpus = generate_corpus(cfg.data);
    write_corpus_tsv(corpus_path(cfg, "train").string(), corpus.train);
    write_corpus_tsv(corpus_path(cfg, "valid").string(), corpus.valid);
    write_corpus_tsv(corpus_path(cfg, "test").string(), corpus.test);
    std::cerr << "wrote corpus (" << corpus.train.size() << " train / "
              << corpus.valid.size() << " valid / " << corpus.test.size() << " test) to "
              << cfg.out_dir << "/corpus\n";
    return 0;
}

int cmd_train(const CommonArgs& args) {
    PipelineConfig cfg = load_config(args);
    Vocab vocab(cfg.language_codes(), cfg.data.base_vocab);
    auto train_corpus = read_corpus_tsv(corpus_path(cfg, "train").string());
    MoEModel model(cfg.model, cfg.train.seed);
    train_model(model, vocab, train_corpus, cfg.train);
    fs::create_directories(fs::path(cfg.out_dir) / "model");
    fs::path ckpt = fs::path(cfg.out_dir) / "model" / "checkpoint.bin";
    save_checkpoint(ckpt.string(), model);
    double acc =
        token_accuracy(model, vocab, read_corpus_tsv(corpus_path(cfg, "valid").string()));
    std::ofstream af(fs::path(cfg.out_dir) / "model" / "accuracy.txt");
    af.precision(17);
    af << acc << '\n';
    std::cerr << "checkpoint: " << ckpt << "  valid token accuracy: " << acc << '\n';
    return 0;
}

int cmd_decode(const CommonArgs& args, const std::string& split, bool with_stats,
               bool masked) {
    PipelineConfig cfg = load_config(args);
    Vocab vocab(cfg.language_codes(), cfg.data.base_vocab);
    MoEModel model =
        load_checkpoint((fs::path(cfg.out_dir) / "model" / "checkpoint.bin").string());
    auto corpus = read_corpus_tsv(corpus_path(cfg, split.c_str()).string());
    auto masks = masked ? load_masks(cfg)
                        : std::map<std::pair<std::string, std::string>, PruningMask>{};
    StatsRecorder recorder(cfg.model.num_experts);

    fs::create_directories(fs::path(cfg.out_dir) / "decodes");
    fs::path hyp_path = fs::path(cfg.out_dir) / "decodes" /
                        (split + (masked ? "." + cfg.prune.tag() : ".baseline") + ".tsv");
    std::ofstream hf(hyp_path);
    for (const auto& sample : corpus) {
        const PruningMask* mask = nullptr;
        if (masked) mask = &masks.at({sample.src_lang, sample.tgt_lang});
        auto out = translate_beam(model, vocab, sample, mask,
                                  with_stats ? &recorder : nullptr);
        hf << sample.src_lang << '\t' << sample.tgt_lang << '\t';
        for (size_t i = 0; i < out.size(); ++i) hf << (i ? " " : "") << out[i];
        hf << '\n';
    }
    std::cerr << "hypotheses: " << hyp_path << '\n';
    if (with_stats) {
        fs::create_directories(fs::path(cfg.out_dir) / "stats");
        fs::path sp = fs::path(cfg.out_dir) / "stats" / (split + "_raw.tsv");
        write_stats_file(sp.string(), recorder.per_direction());
        std::cerr << "stats: " << sp << '\n';
    }
    return 0;
}

int cmd_prune(const CommonArgs& args) {
    PipelineConfig cfg = load_config(args);
    auto per_direction =
        read_stats_file((fs::path(cfg.out_dir) / "stats" / "valid_raw.tsv").string());
    MoeLayout layout = cfg.model.moe_layout();
    auto masks = build_masks(per_direction, layout, cfg.prune, cfg.directions());
    fs::path dir = fs::path(cfg.out_dir) / "masks" / cfg.prune.tag();
    fs::create_directories(dir);
    for (const auto& [d, mask] : masks)
        mask.save_file((dir / (d.first + "-" + d.second + ".mask")).string());
    std::cerr << "masks: " << dir << " (" << masks.size() << " directions)\n";
    return 0;
}

int cmd_eval(const CommonArgs& args, bool baseline) {
    PipelineConfig cfg = load_config(args);
    Vocab vocab(cfg.language_codes(), cfg.data.base_vocab);
    MoEModel model =
        load_checkpoint((fs::path(cfg.out_dir) / "model" / "checkpoint.bin").string());
    auto test = read_corpus_tsv(corpus_path(cfg, "test").string());
    auto directions = cfg.directions();
    MaskResolver resolver = nullptr;
    std::map<std::pair<std::string, std::string>, PruningMask> masks;
    if (!baseline) {
        masks = load_masks(cfg);
        resolver = [&](const std::string& s, const std::string& t) -> const PruningMask* {
            auto it = masks.find({s, t});
            if (it == masks.end())
                throw std::runtime_error("no mask for direction " + s + "-" + t);
            return &it->second;
        };
    }
    EvalReport report = corpus_eval(model, vocab, test, directions, resolver);
    fs::create_directories(fs::path(cfg.out_dir) / "reports");
    fs::path rp = fs::path(cfg.out_dir) / "reports" /
                  ((baseline ? "baseline" : cfg.prune.tag()) + std::string(".tsv"));
    std::ofstream(rp) << eval_report_text(report);
    std::cout << eval_report_text(report);
    std::cerr << "report: " << rp << '\n';
    return 0;
}

int cmd_analyze(const CommonArgs& args) {
    PipelineConfig cfg = load_config(args);
    MoeLayout layout = cfg.model.moe_layout();
    auto per_direction =
        read_stats_file((fs::path(cfg.out_dir) / "stats" / "valid_raw.tsv").string());
    auto masks = load_masks(cfg);
    fs::path dir = fs::path(cfg.out_dir) / "analysis";
    fs::create_directories(dir);

    std::vector<std::string> labels;
    std::vector<ExpertSet> enc_sets, dec_sets;
    for (const auto& [d, mask] : masks) {
        labels.push_back(d.first + "-" + d.second);
        enc_sets.push_back(ExpertSet::from_mask(mask, layout, Side::encoder));
        dec_sets.push_back(ExpertSet::from_mask(mask, layout, Side::decoder));
    }
    std::ofstream(dir / "similarity_encoder.tsv") << similarity_matrix_tsv(labels, enc_sets);
    std::ofstream(dir / "similarity_decoder.tsv") << similarity_matrix_tsv(labels, dec_sets);

    StatsMap lang_agg = aggregate_by_granularity(per_direction, Granularity::lang_specific,
                                                 cfg.directions());
    for (Side side : {Side::encoder, Side::decoder}) {
        std::map<std::string, FinalizedStats> per_lang;
        for (const auto& [key, st] : lang_agg) {
            if (key.side != side) continue;
            per_lang[side == Side::encoder ? key.src_lang : key.tgt_lang] =
                finalize(st, key.label());
        }
        Dendrogram tree = hcluster(build_importance_vectors(per_lang, side));
        std::string stem = std::string("dendrogram_") + side_name(side);
        std::ofstream(dir / (stem + ".nwk")) << to_newick(tree) << '\n';
        std::ofstream(dir / (stem + ".svg")) << dendrogram_svg(tree);
    }
    std::cerr << "analysis artifacts: " << dir << '\n';
    return 0;
}

int cmd_pipeline(const CommonArgs& args) {
    PipelineConfig cfg = load_config(args);
    PipelineResult result = run_pipeline(cfg, args.force);
    std::cout << "== baseline (test) ==\n"
              << eval_report_text(result.baseline) << "== pruned " << cfg.prune.tag()
              << " (test) ==\n"
              << eval_report_text(result.pruned);
    std::cerr << "valid token accuracy: " << result.valid_accuracy << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"mixture-of-experts expert-pruning toolkit"};
    app.require_subcommand(1);

    CommonArgs args;
    std::string decode_split = "valid";
    bool decode_stats = false, decode_masked = false, eval_baseline = false;

    auto* gen = app.add_subcommand("gen-data", "generate synthetic parallel corpora");
    add_common(gen, args);

    auto* train = app.add_subcommand("train", "train the MoE model on the train split");
    add_common(train, args);

    auto* decode = app.add_subcommand("decode", "beam-decode one split");
    add_common(decode, args);
    add_prune_flags(decode, args);
    decode->add_option("--split-name", decode_split, "valid|test (default valid)");
    decode->add_flag("--stats", decode_stats, "record routing statistics");
    decode->add_flag("--masked", decode_masked, "apply the pruning masks for these flags");

    auto* prune = app.add_subcommand("prune", "derive pruning masks from valid statistics");
    add_common(prune, args);
    add_prune_flags(prune, args);

    auto* eval = app.add_subcommand("eval", "decode the test split and score chrF++");
    add_common(eval, args);
    add_prune_flags(eval, args);
    eval->add_flag("--baseline", eval_baseline, "evaluate without pruning");

    auto* analyze = app.add_subcommand("analyze", "similarity matrices and dendrograms");
    add_common(analyze, args);
    add_prune_flags(analyze, args);

    long long total_params = 0, expert_params = 0, num_experts = 0, retained = -1;
    int bytes_per_param = 2;
    auto* mem = app.add_subcommand("mem-estimate", "parameter-memory estimate");
    mem->add_option("--total-params", total_params, "total parameter count")->required();
    mem->add_option("--expert-params", expert_params, "parameters per expert")->required();
    mem->add_option("--num-experts", num_experts, "total expert count")->required();
    mem->add_option("--retained", retained, "retained experts (default: all)");
    mem->add_option("--bytes-per-param", bytes_per_param, "default 2 (half precision)");

    auto* pipe = app.add_subcommand("pipeline", "run every stage end to end");
    add_common(pipe, args);
    add_prune_flags(pipe, args);

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return cmd_gen_data(args);
        if (train->parsed()) return cmd_train(args);
        if (decode->parsed())
            return cmd_decode(args, decode_split, decode_stats, decode_masked);
        if (prune->parsed()) return cmd_prune(args);
        if (eval->parsed()) return cmd_eval(args, eval_baseline);
        if (analyze->parsed()) return cmd_analyze(args);
        if (pipe->parsed()) return cmd_pipeline(args);
        if (mem->parsed()) {
            MemorySpec spec{total_params, expert_params, num_experts, bytes_per_param};
            MemoryEstimate est = retained < 0
                                     ? estimate_memory(spec)
                                     : estimate_memory_retained(spec, retained);
            std::printf("bytes\t%lld\ngib\t%.4f\n", static_cast<long long>(est.bytes),
                        est.gib);
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
