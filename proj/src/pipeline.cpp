#include "moeprune/pipeline.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>

#include "moeprune/analysis.hpp"
#include "moeprune/checkpoint.hpp"
#include "moeprune/metrics.hpp"

namespace fs = std::filesystem;

namespace moeprune {

PruneAlgo algo_from_name(const std::string& s) {
    if (s == "fixed") return PruneAlgo::fixed;
    if (s == "global-threshold") return PruneAlgo::global_threshold;
    if (s == "encdec-threshold") return PruneAlgo::encdec_threshold;
    throw std::invalid_argument("unknown pruning algorithm: " + s);
}

const char* algo_name(PruneAlgo a) {
    switch (a) {
        case PruneAlgo::fixed: return "fixed";
        case PruneAlgo::global_threshold: return "global-threshold";
        case PruneAlgo::encdec_threshold: return "encdec-threshold";
    }
    return "?";
}

int PruneSpec::retain_total(const MoeLayout& layout) const {
    if (rate < 0.0 || rate >= 1.0)
        throw std::invalid_argument("pruning rate must be in [0, 1)");
    double exact = layout.total_experts() * (1.0 - rate);
    int total = static_cast<int>(std::llround(exact));
    if (std::abs(exact - total) > 1e-6)
        throw std::invalid_argument("pruning rate does not map to a whole expert count");
    if (total < 1) throw std::invalid_argument("pruning rate leaves no experts");
    return total;
}

std::string PruneSpec::tag() const {
    char rate_buf[32];
    std::snprintf(rate_buf, sizeof(rate_buf), "%g", rate);
    std::string t = std::string(metric_name(metric)) + "_" + algo_name(algo) + "_" +
                    granularity_name(granularity) + "_r" + rate_buf;
    return t;
}

std::vector<LanguageSpec> parse_languages(const std::string& s) {
    std::vector<LanguageSpec> out;
    std::istringstream is(s);
    std::string item;
    while (std::getline(is, item, ',')) {
        size_t a = item.find_first_not_of(" \t");
        size_t b = item.find_last_not_of(" \t");
        if (a == std::string::npos) continue;
        item = item.substr(a, b - a + 1);
        size_t c1 = item.find(':');
        size_t c2 = c1 == std::string::npos ? std::string::npos : item.find(':', c1 + 1);
        if (c1 == std::string::npos || c2 == std::string::npos)
            throw std::invalid_argument("language spec must be CODE:SEED:TRANSFORM: " + item);
        LanguageSpec lang;
        lang.code = item.substr(0, c1);
        lang.cipher_seed = std::stoull(item.substr(c1 + 1, c2 - c1 - 1));
        lang.transform = transform_from_name(item.substr(c2 + 1));
        if (lang.code.empty()) throw std::invalid_argument("empty language code");
        out.push_back(lang);
    }
    if (out.size() < 2) throw std::invalid_argument("need at least two languages");
    return out;
}

PipelineConfig PipelineConfig::from_ini(const IniData& ini) {
    PipelineConfig cfg;
    std::string langs = ini_get(ini, "data", "languages", "");
    if (langs.empty()) throw std::invalid_argument("config [data] languages is required");
    cfg.data.languages = parse_languages(langs);
    cfg.data.base_vocab = ini_get_int(ini, "data", "base_vocab", cfg.data.base_vocab);
    cfg.data.min_len = ini_get_int(ini, "data", "min_len", cfg.data.min_len);
    cfg.data.max_len = ini_get_int(ini, "data", "max_len", cfg.data.max_len);
    cfg.data.train_per_direction =
        ini_get_int(ini, "data", "train_per_direction", cfg.data.train_per_direction);
    cfg.data.valid_per_direction =
        ini_get_int(ini, "data", "valid_per_direction", cfg.data.valid_per_direction);
    cfg.data.test_per_direction =
        ini_get_int(ini, "data", "test_per_direction", cfg.data.test_per_direction);
    cfg.data.seed = static_cast<std::uint64_t>(
        ini_get_int(ini, "data", "seed", static_cast<int>(cfg.data.seed)));

    ModelConfig& m = cfg.model;
    m.d_model = ini_get_int(ini, "model", "d_model", m.d_model);
    m.d_ffn = ini_get_int(ini, "model", "d_ffn", m.d_ffn);
    m.n_heads = ini_get_int(ini, "model", "n_heads", m.n_heads);
    m.enc_layers = ini_get_int(ini, "model", "enc_layers", m.enc_layers);
    m.dec_layers = ini_get_int(ini, "model", "dec_layers", m.dec_layers);
    m.moe_frequency = ini_get_int(ini, "model", "moe_frequency", m.moe_frequency);
    m.num_experts = ini_get_int(ini, "model", "num_experts", m.num_experts);
    m.top_k = ini_get_int(ini, "model", "top_k", m.top_k);
    m.beam_size = ini_get_int(ini, "model", "beam_size", m.beam_size);
    m.label_smoothing = ini_get_double(ini, "model", "label_smoothing", m.label_smoothing);
    m.lb_loss_coeff = ini_get_double(ini, "model", "lb_loss_coeff", m.lb_loss_coeff);
    m.vocab_size = 1 + static_cast<int>(cfg.data.languages.size()) + cfg.data.base_vocab;
    m.validate();

    cfg.train.steps = ini_get_int(ini, "train", "steps", cfg.train.steps);
    cfg.train.batch_size = ini_get_int(ini, "train", "batch_size", cfg.train.batch_size);
    cfg.train.lr = ini_get_double(ini, "train", "lr", cfg.train.lr);
    cfg.train.seed = static_cast<std::uint64_t>(
        ini_get_int(ini, "train", "seed", static_cast<int>(cfg.train.seed)));
    cfg.train.log_every = ini_get_int(ini, "train", "log_every", cfg.train.log_every);

    PruneSpec& p = cfg.prune;
    p.metric = metric_from_name(ini_get(ini, "prune", "metric", metric_name(p.metric)));
    p.algo = algo_from_name(ini_get(ini, "prune", "algo", algo_name(p.algo)));
    p.granularity = granularity_from_name(
        ini_get(ini, "prune", "granularity", granularity_name(p.granularity)));
    p.rate = ini_get_double(ini, "prune", "rate", p.rate);
    p.split = ini_get(ini, "prune", "split", p.split);
    p.min_per_layer = ini_get_int(ini, "prune", "min_per_layer", p.min_per_layer);

    cfg.out_dir = ini_get(ini, "run", "out", cfg.out_dir);
    return cfg;
}

PipelineConfig PipelineConfig::from_file(const std::string& path) {
    return from_ini(parse_ini_file(path));
}

std::vector<std::string> PipelineConfig::language_codes() const {
    std::vector<std::string> out;
    for (const auto& l : data.languages) out.push_back(l.code);
    return out;
}

std::vector<std::pair<std::string, std::string>> PipelineConfig::directions() const {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& a : data.languages)
        for (const auto& b : data.languages)
            if (a.code != b.code) out.push_back({a.code, b.code});
    return out;
}

std::pair<int, int> budget_side_counts(const Budget& budget, const MoeLayout& layout) {
    const int ne = layout.count_side(Side::encoder);
    const int nd = layout.count_side(Side::decoder);
    switch (budget.split) {
        case BudgetSplit::balanced: {
            long long num = static_cast<long long>(budget.total_retain) * ne;
            if (ne + nd == 0 || num % (ne + nd) != 0)
                throw std::invalid_argument("balanced budget does not split across stacks");
            int e = static_cast<int>(num / (ne + nd));
            return {e, budget.total_retain - e};
        }
        case BudgetSplit::ratio: {
            if (budget.enc_ratio < 1 || budget.dec_ratio < 1)
                throw std::invalid_argument("budget ratio parts must be positive");
            long long num = static_cast<long long>(budget.total_retain) * budget.enc_ratio;
            if (num % (budget.enc_ratio + budget.dec_ratio) != 0)
                throw std::invalid_argument("budget does not split at the requested ratio");
            int e = static_cast<int>(num / (budget.enc_ratio + budget.dec_ratio));
            return {e, budget.total_retain - e};
        }
        case BudgetSplit::explicit_counts:
            if (budget.enc_count + budget.dec_count != budget.total_retain)
                throw std::invalid_argument("explicit budget counts must sum to the total");
            return {budget.enc_count, budget.dec_count};
    }
    throw std::logic_error("unreachable");
}

MetricTable combined_metric_table(const ExpertStats& enc_stats, const ExpertStats& dec_stats,
                                  MetricKind kind, const std::string& key_label) {
    MetricTable out;
    out.kind = kind;
    out.normalized = true;
    for (const ExpertStats* s : {&enc_stats, &dec_stats}) {
        if (s->empty()) continue;
        MetricTable t = normalize_per_layer(compute_metric(finalize(*s, key_label), kind));
        for (auto& [id, v] : t.layers) out.layers[id] = std::move(v);
    }
    if (out.layers.empty())
        throw std::invalid_argument("no statistics available for " + key_label);
    return out;
}

namespace {

PruningMask prune_full(const MetricTable& table, const MoeLayout& layout,
                       const PruneSpec& spec, const Budget& budget) {
    switch (spec.algo) {
        case PruneAlgo::fixed:
            return prune_fixed_per_layer(table, layout, budget);
        case PruneAlgo::global_threshold:
            return prune_global_threshold(table, layout, budget.total_retain,
                                          spec.min_per_layer);
        case PruneAlgo::encdec_threshold: {
            auto [e, d] = budget_side_counts(budget, layout);
            return prune_encdec_thresholds(table, layout, e, d, spec.min_per_layer);
        }
    }
    throw std::logic_error("unreachable");
}

// Prunes one stack in isolation; used for language-specific masks where the
// encoder depends only on the source and the decoder only on the target.
PruningMask prune_side(const MetricTable& table, const MoeLayout& layout, Side side,
                       int count, const PruneSpec& spec) {
    MoeLayout sub;
    sub.layers = layout.side_layers(side);
    sub.num_experts = layout.num_experts;
    if (spec.algo == PruneAlgo::fixed) {
        Budget b;
        b.total_retain = count;
        b.split = BudgetSplit::explicit_counts;
        b.enc_count = side == Side::encoder ? count : 0;
        b.dec_count = side == Side::decoder ? count : 0;
        b.min_per_layer = spec.min_per_layer;
        return prune_fixed_per_layer(table, sub, b);
    }
    return prune_global_threshold(table, sub, count, spec.min_per_layer);
}

const ExpertStats& stats_at(const StatsMap& m, const StatsKey& key) {
    auto it = m.find(key);
    if (it == m.end())
        throw std::runtime_error("missing statistics for " + key.label());
    return it->second;
}

}  // namespace

std::map<std::pair<std::string, std::string>, PruningMask> build_masks(
    const StatsMap& per_direction, const MoeLayout& layout, const PruneSpec& spec,
    const std::vector<std::pair<std::string, std::string>>& directions) {
    if (directions.empty()) throw std::invalid_argument("build_masks: no directions");
    const int retain = spec.retain_total(layout);
    Budget budget = Budget::parse_split(spec.split, retain, spec.min_per_layer);
    StatsMap agg = aggregate_by_granularity(per_direction, spec.granularity, directions);

    std::map<std::pair<std::string, std::string>, PruningMask> masks;
    if (spec.granularity == Granularity::global) {
        StatsKey enc{Granularity::global, Side::encoder, "", ""};
        StatsKey dec{Granularity::global, Side::decoder, "", ""};
        MetricTable table =
            combined_metric_table(stats_at(agg, enc), stats_at(agg, dec), spec.metric,
                                  "global");
        PruningMask mask = prune_full(table, layout, spec, budget);
        mask.granularity_key = "global";
        mask.validate(layout);
        for (const auto& d : directions) masks[d] = mask;
    } else if (spec.granularity == Granularity::lang_pair) {
        for (const auto& [src, tgt] : directions) {
            StatsKey enc{Granularity::lang_pair, Side::encoder, src, tgt};
            StatsKey dec{Granularity::lang_pair, Side::decoder, src, tgt};
            MetricTable table =
                combined_metric_table(stats_at(agg, enc), stats_at(agg, dec), spec.metric,
                                      src + "-" + tgt);
            PruningMask mask = prune_full(table, layout, spec, budget);
            mask.granularity_key = src + "-" + tgt;
            mask.validate(layout);
            masks[{src, tgt}] = mask;
        }
    } else {
        auto [enc_count, dec_count] = budget_side_counts(budget, layout);
        ExpertStats empty;
        empty.num_experts = layout.num_experts;
        std::map<std::string, PruningMask> enc_masks, dec_masks;
        for (const auto& [src, tgt] : directions) {
            if (!enc_masks.count(src)) {
                StatsKey key{Granularity::lang_specific, Side::encoder, src, ""};
                MetricTable t = combined_metric_table(stats_at(agg, key), empty,
                                                      spec.metric, key.label());
                enc_masks[src] =
                    prune_side(t, layout, Side::encoder, enc_count, spec);
            }
            if (!dec_masks.count(tgt)) {
                StatsKey key{Granularity::lang_specific, Side::decoder, "", tgt};
                MetricTable t = combined_metric_table(empty, stats_at(agg, key),
                                                      spec.metric, key.label());
                dec_masks[tgt] =
                    prune_side(t, layout, Side::decoder, dec_count, spec);
            }
            PruningMask mask;
            mask.metric_kind = metric_name(spec.metric);
            mask.min_per_layer = spec.min_per_layer;
            mask.granularity_key = "src=" + src + "|tgt=" + tgt;
            mask.retained = enc_masks[src].retained;
            for (const auto& [id, ids] : dec_masks[tgt].retained) mask.retained[id] = ids;
            mask.validate(layout);
            masks[{src, tgt}] = mask;
        }
    }
    return masks;
}

std::uint64_t fnv1a(const std::string& bytes) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::uint64_t fnv1a_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open for hashing: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return fnv1a(buf.str());
}

namespace {

std::string hex64(std::uint64_t v) {
    char buf[24];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::string serialize_config(const PipelineConfig& cfg) {
    std::ostringstream os;
    for (const auto& l : cfg.data.languages)
        os << l.code << ':' << l.cipher_seed << ':' << transform_name(l.transform) << ',';
    os << '|' << cfg.data.base_vocab << ' ' << cfg.data.min_len << ' ' << cfg.data.max_len
       << ' ' << cfg.data.train_per_direction << ' ' << cfg.data.valid_per_direction << ' '
       << cfg.data.test_per_direction << ' ' << cfg.data.seed;
    const ModelConfig& m = cfg.model;
    os << '|' << m.vocab_size << ' ' << m.d_model << ' ' << m.d_ffn << ' ' << m.n_heads
       << ' ' << m.enc_layers << ' ' << m.dec_layers << ' ' << m.moe_frequency << ' '
       << m.num_experts << ' ' << m.top_k << ' ' << m.beam_size << ' ' << m.label_smoothing
       << ' ' << m.lb_loss_coeff;
    os << '|' << cfg.train.steps << ' ' << cfg.train.batch_size << ' ' << cfg.train.lr
       << ' ' << cfg.train.seed;
    return os.str();
}

class StageRunner {
  public:
    StageRunner(const fs::path& out, bool force, bool quiet)
        : stamp_dir_(out / ".stamps"), force_(force), quiet_(quiet) {
        fs::create_directories(stamp_dir_);
    }

    // Runs `fn` unless the stage's stamp matches `input_hash` and all
    // `artifacts` exist. Returns the chained hash for downstream stages.
    template <typename Fn>
    std::uint64_t run(const std::string& name, std::uint64_t input_hash,
                      const std::vector<fs::path>& artifacts, Fn&& fn) {
        fs::path stamp = stamp_dir_ / name;
        bool fresh = !force_ && stamp_matches(stamp, input_hash);
        for (const auto& a : artifacts)
            if (!fs::exists(a)) fresh = false;
        if (fresh) {
            log("stage " + name + ": up to date");
            return input_hash;
        }
        log("stage " + name + ": running");
        try {
            fn();
        } catch (const std::exception& e) {
            throw std::runtime_error("stage " + name + " failed: " + e.what());
        }
        std::ofstream out(stamp);
        out << hex64(input_hash) << '\n';
        return input_hash;
    }

    void log(const std::string& msg) const {
        if (!quiet_) std::cerr << "[pipeline] " << msg << '\n';
    }

  private:
    static bool stamp_matches(const fs::path& stamp, std::uint64_t hash) {
        std::ifstream in(stamp);
        if (!in) return false;
        std::string line;
        std::getline(in, line);
        return line == hex64(hash);
    }

    fs::path stamp_dir_;
    bool force_, quiet_;
};

EvalReport parse_eval_report(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open report: " + path);
    EvalReport report;
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string src, tgt, chrf, ratio;
        std::getline(ls, src, '\t');
        std::getline(ls, tgt, '\t');
        std::getline(ls, chrf, '\t');
        std::getline(ls, ratio, '\t');
        if (src == "average") {
            report.avg_chrf = std::stod(chrf);
            report.avg_length_ratio = std::stod(ratio);
        } else {
            report.rows.push_back({src, tgt, std::stod(chrf), std::stod(ratio)});
        }
    }
    return report;
}

std::string mask_path(const fs::path& dir, const std::string& src, const std::string& tgt) {
    return (dir / (src + "-" + tgt + ".mask")).string();
}

}  // namespace

PipelineResult run_pipeline(const PipelineConfig& cfg, bool force, bool quiet) {
    const fs::path out(cfg.out_dir);
    fs::create_directories(out / "corpus");
    fs::create_directories(out / "model");
    fs::create_directories(out / "stats");
    fs::create_directories(out / "reports");
    fs::create_directories(out / "analysis");
    const fs::path mask_dir = out / "masks" / cfg.prune.tag();
    fs::create_directories(mask_dir);

    StageRunner stages(out, force, quiet);
    const std::string cfg_str = serialize_config(cfg);
    const auto directions = cfg.directions();
    Vocab vocab(cfg.language_codes(), cfg.data.base_vocab);

    const fs::path train_tsv = out / "corpus" / "train.tsv";
    const fs::path valid_tsv = out / "corpus" / "valid.tsv";
    const fs::path test_tsv = out / "corpus" / "test.tsv";
    std::uint64_t h = stages.run(
        "gen-data", fnv1a("data|" + cfg_str), {train_tsv, valid_tsv, test_tsv}, [&] {
            GeneratedCorpus corpus = generate_corpus(cfg.data);
            write_corpus_tsv(train_tsv.string(), corpus.train);
            write_corpus_tsv(valid_tsv.string(), corpus.valid);
            write_corpus_tsv(test_tsv.string(), corpus.test);
        });

    const fs::path ckpt = out / "model" / "checkpoint.bin";
    const fs::path acc_file = out / "model" / "accuracy.txt";
    h = stages.run("train", fnv1a("train|" + cfg_str + hex64(h)), {ckpt, acc_file}, [&] {
        MoEModel model(cfg.model, cfg.train.seed);
        auto train_corpus = read_corpus_tsv(train_tsv.string());
        TrainOptions opts = cfg.train;
        if (quiet) opts.log_every = 0;
        train_model(model, vocab, train_corpus, opts);
        save_checkpoint(ckpt.string(), model);
        double acc = token_accuracy(model, vocab, read_corpus_tsv(valid_tsv.string()));
        std::ofstream af(acc_file);
        af.precision(17);
        af << acc << '\n';
    });

    MoEModel model = load_checkpoint(ckpt.string());
    double valid_accuracy = 0.0;
    {
        std::ifstream af(acc_file);
        af >> valid_accuracy;
    }

    const fs::path raw_stats = out / "stats" / "valid_raw.tsv";
    const fs::path baseline_report_path = out / "reports" / "baseline.tsv";
    h = stages.run("collect-stats", fnv1a("stats|" + hex64(h)),
                   {raw_stats, baseline_report_path}, [&] {
                       auto valid = read_corpus_tsv(valid_tsv.string());
                       StatsRecorder recorder(cfg.model.num_experts);
                       EvalReport report =
                           corpus_eval(model, vocab, valid, directions, nullptr, &recorder);
                       write_stats_file(raw_stats.string(), recorder.per_direction());
                       std::ofstream rf(baseline_report_path);
                       rf << eval_report_text(report);
                   });

    StatsMap per_direction = read_stats_file(raw_stats.string());

    const fs::path agg_path =
        out / "stats" / (std::string("agg_") + granularity_name(cfg.prune.granularity) +
                         ".tsv");
    h = stages.run("aggregate", fnv1a("agg|" + cfg.prune.tag() + hex64(h)), {agg_path}, [&] {
        StatsMap agg =
            aggregate_by_granularity(per_direction, cfg.prune.granularity, directions);
        write_stats_file(agg_path.string(), agg);
    });

    std::vector<fs::path> mask_paths;
    for (const auto& [src, tgt] : directions) mask_paths.push_back(mask_path(mask_dir, src, tgt));
    h = stages.run("prune", fnv1a("prune|" + cfg.prune.tag() + hex64(h)), mask_paths, [&] {
        auto masks = build_masks(per_direction, model.layout(), cfg.prune, directions);
        for (const auto& [dir, mask] : masks)
            mask.save_file(mask_path(mask_dir, dir.first, dir.second));
    });

    std::map<std::pair<std::string, std::string>, PruningMask> masks;
    for (const auto& [src, tgt] : directions)
        masks[{src, tgt}] = PruningMask::load_file(mask_path(mask_dir, src, tgt));

    const fs::path pruned_report_path = out / "reports" / (cfg.prune.tag() + ".tsv");
    h = stages.run("evaluate", fnv1a("eval|" + cfg.prune.tag() + hex64(h)),
                   {pruned_report_path}, [&] {
                       auto test = read_corpus_tsv(test_tsv.string());
                       MaskResolver resolver = [&](const std::string& s,
                                                   const std::string& t) -> const PruningMask* {
                           auto it = masks.find({s, t});
                           if (it == masks.end())
                               throw std::runtime_error("no mask for direction " + s + "-" + t);
                           return &it->second;
                       };
                       EvalReport report = corpus_eval(model, vocab, test, directions, resolver);
                       std::ofstream rf(pruned_report_path);
                       rf << eval_report_text(report);
                   });

    const fs::path sim_enc = out / "analysis" / "similarity_encoder.tsv";
    const fs::path sim_dec = out / "analysis" / "similarity_decoder.tsv";
    const fs::path nwk_enc = out / "analysis" / "dendrogram_encoder.nwk";
    const fs::path nwk_dec = out / "analysis" / "dendrogram_decoder.nwk";
    const fs::path svg_enc = out / "analysis" / "dendrogram_encoder.svg";
    const fs::path svg_dec = out / "analysis" / "dendrogram_decoder.svg";
    const fs::path ratio_path = out / "analysis" / "length_ratio.tsv";
    stages.run(
        "analyze", fnv1a("analyze|" + cfg.prune.tag() + hex64(h)),
        {sim_enc, sim_dec, nwk_enc, nwk_dec, svg_enc, svg_dec, ratio_path}, [&] {
            // Retained-set overlap between directions, one matrix per stack.
            std::vector<std::string> labels;
            std::vector<ExpertSet> enc_sets, dec_sets;
            for (const auto& [dir, mask] : masks) {
                labels.push_back(dir.first + "-" + dir.second);
                enc_sets.push_back(ExpertSet::from_mask(mask, model.layout(), Side::encoder));
                dec_sets.push_back(ExpertSet::from_mask(mask, model.layout(), Side::decoder));
            }
            std::ofstream(sim_enc) << similarity_matrix_tsv(labels, enc_sets);
            std::ofstream(sim_dec) << similarity_matrix_tsv(labels, dec_sets);

            // Language clustering from language-specific importance vectors.
            StatsMap lang_agg = aggregate_by_granularity(
                per_direction, Granularity::lang_specific, directions);
            for (Side side : {Side::encoder, Side::decoder}) {
                std::map<std::string, FinalizedStats> per_lang;
                for (const auto& [key, st] : lang_agg) {
                    if (key.side != side) continue;
                    std::string lang =
                        side == Side::encoder ? key.src_lang : key.tgt_lang;
                    per_lang[lang] = finalize(st, key.label());
                }
                Dendrogram tree = hcluster(build_importance_vectors(per_lang, side));
                const fs::path& nwk = side == Side::encoder ? nwk_enc : nwk_dec;
                const fs::path& svg = side == Side::encoder ? svg_enc : svg_dec;
                std::ofstream(nwk) << to_newick(tree) << '\n';
                std::ofstream(svg) << dendrogram_svg(tree);
            }

            // Per-direction hypothesis/reference length ratios of the pruned run.
            EvalReport pruned = parse_eval_report(pruned_report_path.string());
            double mean = 0.0;
            for (const auto& r : pruned.rows) mean += r.length_ratio;
            mean /= pruned.rows.size();
            double var = 0.0;
            for (const auto& r : pruned.rows) {
                double d = r.length_ratio - mean;
                var += d * d;
            }
            var /= pruned.rows.size();
            std::ofstream rf(ratio_path);
            rf << "src\ttgt\tlength_ratio\n";
            char buf[64];
            for (const auto& r : pruned.rows) {
                std::snprintf(buf, sizeof(buf), "%.4f", r.length_ratio);
                rf << r.src << '\t' << r.tgt << '\t' << buf << '\n';
            }
            std::snprintf(buf, sizeof(buf), "%.4f", mean);
            rf << "mean\t-\t" << buf << '\n';
            std::snprintf(buf, sizeof(buf), "%.4f", std::sqrt(var));
            rf << "stddev\t-\t" << buf << '\n';
        });

    PipelineResult result;
    result.baseline = parse_eval_report(baseline_report_path.string());
    result.pruned = parse_eval_report(pruned_report_path.string());
    result.valid_accuracy = valid_accuracy;
    result.masks = std::move(masks);
    return result;
}

}  // namespace moeprune
