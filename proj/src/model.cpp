#include "moeprune/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <random>
#include <stdexcept>

namespace moeprune {

namespace {

using ag::Mat;
using ag::Var;

constexpr double kNegInf = -1e30;

Mat sinusoidal_pe(int T, int d) {
    Mat pe(T, d);
    for (int t = 0; t < T; ++t) {
        for (int i = 0; i < d; i += 2) {
            double angle = t / std::pow(10000.0, static_cast<double>(i) / d);
            pe(t, i) = std::sin(angle);
            if (i + 1 < d) pe(t, i + 1) = std::cos(angle);
        }
    }
    return pe;
}

// Top-2 among retained ids by probability, ties by lower expert id.
std::pair<int, int> top2_of(const Eigen::VectorXd& probs, const std::vector<int>& retained) {
    int best = -1, second = -1;
    for (int e : retained) {
        if (best < 0 || probs(e) > probs(best)) {
            second = best;
            best = e;
        } else if (second < 0 || probs(e) > probs(second)) {
            second = e;
        }
    }
    return {best, second};
}

struct ParamInit {
    std::mt19937_64 rng;
    std::vector<std::pair<std::string, Var>>* registry;

    Var mat(const std::string& name, int rows, int cols) {
        double bound = std::sqrt(6.0 / (rows + cols));
        std::uniform_real_distribution<double> dist(-bound, bound);
        Mat m(rows, cols);
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < cols; ++c) m(r, c) = dist(rng);
        Var v = ag::parameter(std::move(m));
        registry->emplace_back(name, v);
        return v;
    }
    Var zeros(const std::string& name, int rows, int cols) {
        Var v = ag::parameter(Mat::Zero(rows, cols));
        registry->emplace_back(name, v);
        return v;
    }
    Var ones(const std::string& name, int rows, int cols) {
        Var v = ag::parameter(Mat::Ones(rows, cols));
        registry->emplace_back(name, v);
        return v;
    }
    LayerNormParams ln(const std::string& prefix, int d) {
        return {ones(prefix + ".gain", 1, d), zeros(prefix + ".bias", 1, d)};
    }
    AttentionParams attn(const std::string& prefix, int d) {
        return {mat(prefix + ".wq", d, d),     mat(prefix + ".wk", d, d),
                mat(prefix + ".wv", d, d),     mat(prefix + ".wo", d, d),
                zeros(prefix + ".bq", 1, d),   zeros(prefix + ".bk", 1, d),
                zeros(prefix + ".bv", 1, d),   zeros(prefix + ".bo", 1, d)};
    }
    DenseFfnParams ffn(const std::string& prefix, int d, int dffn) {
        return {mat(prefix + ".w1", d, dffn), zeros(prefix + ".b1", 1, dffn),
                mat(prefix + ".w2", dffn, d), zeros(prefix + ".b2", 1, d)};
    }
    MoeFfnParams moe(const std::string& prefix, int d, int dffn, int n_experts,
                     int global_id) {
        MoeFfnParams p;
        p.global_id = global_id;
        p.gate_w = mat(prefix + ".gate", d, n_experts);
        for (int e = 0; e < n_experts; ++e)
            p.experts.push_back(ffn(prefix + ".e" + std::to_string(e), d, dffn));
        return p;
    }
};

}  // namespace

std::vector<int> retained_experts(const MoeLayout& layout, int layer_id,
                                  const PruningMask* mask) {
    layout.layer(layer_id);  // range check
    std::vector<int> out;
    if (mask == nullptr) {
        out.resize(layout.num_experts);
        for (int e = 0; e < layout.num_experts; ++e) out[e] = e;
    } else {
        out = mask->layer_retained(layer_id);
    }
    if (static_cast<int>(out.size()) < 2)
        throw std::invalid_argument("MoE layer " + std::to_string(layer_id) +
                                    " has fewer than 2 retained experts");
    return out;
}

MoEModel::MoEModel(ModelConfig cfg, std::uint64_t seed)
    : cfg_(std::move(cfg)), layout_(cfg_.moe_layout()) {
    cfg_.validate();
    ParamInit init{std::mt19937_64(seed), &params_};

    embedding_ = init.mat("embedding", cfg_.vocab_size, cfg_.d_model);
    out_w_ = init.mat("out.w", cfg_.d_model, cfg_.vocab_size);
    out_b_ = init.zeros("out.b", 1, cfg_.vocab_size);
    enc_final_ln_ = init.ln("enc.ln_final", cfg_.d_model);
    dec_final_ln_ = init.ln("dec.ln_final", cfg_.d_model);

    int moe_id = 0;
    for (int l = 1; l <= cfg_.enc_layers; ++l) {
        std::string prefix = "enc.l" + std::to_string(l);
        EncoderLayer layer;
        layer.ln1 = init.ln(prefix + ".ln1", cfg_.d_model);
        layer.ln2 = init.ln(prefix + ".ln2", cfg_.d_model);
        layer.self_attn = init.attn(prefix + ".attn", cfg_.d_model);
        layer.is_moe = cfg_.is_moe_layer(l);
        if (layer.is_moe)
            layer.moe = init.moe(prefix + ".moe", cfg_.d_model, cfg_.d_ffn,
                                 cfg_.num_experts, moe_id++);
        else
            layer.ffn = init.ffn(prefix + ".ffn", cfg_.d_model, cfg_.d_ffn);
        enc_layers_.push_back(std::move(layer));
    }
    for (int l = 1; l <= cfg_.dec_layers; ++l) {
        std::string prefix = "dec.l" + std::to_string(l);
        DecoderLayer layer;
        layer.ln1 = init.ln(prefix + ".ln1", cfg_.d_model);
        layer.ln2 = init.ln(prefix + ".ln2", cfg_.d_model);
        layer.ln3 = init.ln(prefix + ".ln3", cfg_.d_model);
        layer.self_attn = init.attn(prefix + ".self_attn", cfg_.d_model);
        layer.cross_attn = init.attn(prefix + ".cross_attn", cfg_.d_model);
        layer.is_moe = cfg_.is_moe_layer(l);
        if (layer.is_moe)
            layer.moe = init.moe(prefix + ".moe", cfg_.d_model, cfg_.d_ffn,
                                 cfg_.num_experts, moe_id++);
        else
            layer.ffn = init.ffn(prefix + ".ffn", cfg_.d_model, cfg_.d_ffn);
        dec_layers_.push_back(std::move(layer));
    }
}

ag::Var MoEModel::embed(const std::vector<int>& tokens) const {
    for (int t : tokens)
        if (t < 0 || t >= cfg_.vocab_size)
            throw std::out_of_range("token id out of vocabulary range");
    Var x = ag::gather_rows(embedding_, tokens);
    return ag::add_const(x, sinusoidal_pe(static_cast<int>(tokens.size()), cfg_.d_model));
}

ag::Var MoEModel::attention(const AttentionParams& p, const ag::Var& q_in,
                            const ag::Var& kv_in, bool causal) const {
    const int d = cfg_.d_model;
    const int h = cfg_.n_heads;
    const int dh = d / h;
    Var q = ag::add_rowvec(ag::matmul(q_in, p.wq), p.bq);
    Var k = ag::add_rowvec(ag::matmul(kv_in, p.wk), p.bk);
    Var v = ag::add_rowvec(ag::matmul(kv_in, p.wv), p.bv);

    Mat causal_mask;
    if (causal) {
        const Eigen::Index tq = q->value.rows(), tk = k->value.rows();
        causal_mask = Mat::Zero(tq, tk);
        for (Eigen::Index r = 0; r < tq; ++r)
            for (Eigen::Index c = r + 1; c < tk; ++c) causal_mask(r, c) = kNegInf;
    }

    std::vector<Var> heads;
    for (int i = 0; i < h; ++i) {
        Var qh = ag::slice_cols(q, i * dh, dh);
        Var kh = ag::slice_cols(k, i * dh, dh);
        Var vh = ag::slice_cols(v, i * dh, dh);
        Var s = ag::scale(ag::matmul_nt(qh, kh), 1.0 / std::sqrt(static_cast<double>(dh)));
        if (causal) s = ag::add_const(s, causal_mask);
        heads.push_back(ag::matmul(ag::softmax_rows(s), vh));
    }
    return ag::add_rowvec(ag::matmul(ag::concat_cols(heads), p.wo), p.bo);
}

ag::Var MoEModel::dense_ffn(const DenseFfnParams& p, const ag::Var& x) const {
    Var h = ag::relu(ag::add_rowvec(ag::matmul(x, p.w1), p.b1));
    return ag::add_rowvec(ag::matmul(h, p.w2), p.b2);
}

ag::Var MoEModel::moe_ffn(const MoeFfnParams& p, const ag::Var& x, const PruningMask* mask,
                          const GateRecordFn& rec, std::vector<MoeTrace>* traces) const {
    const int T = static_cast<int>(x->value.rows());
    const int N = cfg_.num_experts;
    std::vector<int> retained = retained_experts(layout_, p.global_id, mask);

    Var logits = ag::matmul(x, p.gate_w);
    if (mask != nullptr && static_cast<int>(retained.size()) < N) {
        Mat penalty = Mat::Zero(T, N);
        std::vector<bool> keep(N, false);
        for (int e : retained) keep[e] = true;
        for (int e = 0; e < N; ++e)
            if (!keep[e]) penalty.col(e).setConstant(kNegInf);
        logits = ag::add_const(logits, penalty);
    }
    Var probs = ag::softmax_rows(logits);

    std::vector<int> top1(T), top2(T);
    for (int t = 0; t < T; ++t) {
        Eigen::VectorXd row = probs->value.row(t);
        auto [b, s] = top2_of(row, retained);
        top1[t] = b;
        top2[t] = s;
        if (rec) {
            GateDecision d;
            d.layer_id = p.global_id;
            d.token_index = t;
            d.gate_probs = row;
            // zero out pruned entries, they only carry softmax underflow
            if (mask != nullptr) {
                Eigen::VectorXd clean = Eigen::VectorXd::Zero(N);
                for (int e : retained) clean(e) = row(e);
                d.gate_probs = clean;
            }
            d.top1 = b;
            d.top2 = s;
            d.gate_top1 = row(b);
            d.gate_top2 = row(s);
            rec(d);
        }
    }
    if (traces) traces->push_back({p.global_id, probs, top1});

    Var w1 = ag::gather_cols_per_row(probs, top1);
    Var w2 = ag::gather_cols_per_row(probs, top2);
    Var denom = ag::add(w1, w2);
    Var c1 = ag::cwise_div(w1, denom);
    Var c2 = ag::cwise_div(w2, denom);

    Var y;
    for (int e : retained) {
        std::vector<int> rows;
        Mat m1 = Mat::Zero(T, 1), m2 = Mat::Zero(T, 1);
        for (int t = 0; t < T; ++t) {
            if (top1[t] == e || top2[t] == e) rows.push_back(t);
            if (top1[t] == e) m1(t, 0) = 1.0;
            if (top2[t] == e) m2(t, 0) = 1.0;
        }
        if (rows.empty()) continue;
        Var h = dense_ffn(p.experts[e], ag::gather_rows(x, rows));
        Var spread = ag::scatter_rows(h, rows, T);
        Var weight = ag::add(ag::cwise_mul_const(c1, m1), ag::cwise_mul_const(c2, m2));
        Var term = ag::colwise_scale(spread, weight);
        y = y ? ag::add(y, term) : term;
    }
    return y;
}

ag::Var MoEModel::encode(const std::vector<int>& enc_input, const PruningMask* mask,
                         const GateRecordFn& rec, std::vector<MoeTrace>* traces) const {
    if (enc_input.empty()) throw std::invalid_argument("encode: empty input");
    Var x = embed(enc_input);
    for (const auto& layer : enc_layers_) {
        Var h = ag::layer_norm_rows(x, layer.ln1.gain, layer.ln1.bias);
        x = ag::add(x, attention(layer.self_attn, h, h, /*causal=*/false));
        h = ag::layer_norm_rows(x, layer.ln2.gain, layer.ln2.bias);
        Var f = layer.is_moe ? moe_ffn(layer.moe, h, mask, rec, traces)
                             : dense_ffn(layer.ffn, h);
        x = ag::add(x, f);
    }
    return ag::layer_norm_rows(x, enc_final_ln_.gain, enc_final_ln_.bias);
}

ag::Var MoEModel::decoder_logits(const ag::Var& memory, const std::vector<int>& dec_input,
                                 const PruningMask* mask, const GateRecordFn& rec,
                                 std::vector<MoeTrace>* traces) const {
    if (dec_input.empty()) throw std::invalid_argument("decoder_logits: empty input");
    Var x = embed(dec_input);
    for (const auto& layer : dec_layers_) {
        Var h = ag::layer_norm_rows(x, layer.ln1.gain, layer.ln1.bias);
        x = ag::add(x, attention(layer.self_attn, h, h, /*causal=*/true));
        h = ag::layer_norm_rows(x, layer.ln2.gain, layer.ln2.bias);
        x = ag::add(x, attention(layer.cross_attn, h, memory, /*causal=*/false));
        h = ag::layer_norm_rows(x, layer.ln3.gain, layer.ln3.bias);
        Var f = layer.is_moe ? moe_ffn(layer.moe, h, mask, rec, traces)
                             : dense_ffn(layer.ffn, h);
        x = ag::add(x, f);
    }
    Var out = ag::layer_norm_rows(x, dec_final_ln_.gain, dec_final_ln_.bias);
    return ag::add_rowvec(ag::matmul(out, out_w_), out_b_);
}

std::pair<ag::Var, ag::Var> MoEModel::loss(const std::vector<TrainSample>& batch) const {
    if (batch.empty()) throw std::invalid_argument("loss: empty batch");
    const int V = cfg_.vocab_size;
    const double eps = cfg_.label_smoothing;

    std::vector<MoeTrace> traces;
    Var task_sum;
    long total_tokens = 0;
    for (const auto& sample : batch) {
        if (sample.labels.size() != sample.dec_input.size())
            throw std::invalid_argument("loss: labels must align with decoder input");
        Var memory = encode(sample.enc_input, nullptr, nullptr, &traces);
        Var logits = decoder_logits(memory, sample.dec_input, nullptr, nullptr, &traces);
        Var logp = ag::log_softmax_rows(logits);
        const int T = static_cast<int>(sample.labels.size());
        Mat q = Mat::Constant(T, V, eps / V);
        for (int t = 0; t < T; ++t) {
            int label = sample.labels[t];
            if (label < 0 || label >= V)
                throw std::out_of_range("loss: label out of vocabulary range");
            q(t, label) += 1.0 - eps;
        }
        Var nll = ag::scale(ag::sum_all(ag::cwise_mul_const(logp, q)), -1.0);
        task_sum = task_sum ? ag::add(task_sum, nll) : nll;
        total_tokens += T;
    }
    Var task = ag::scale(task_sum, 1.0 / static_cast<double>(total_tokens));

    // Group traces per layer: lb = N * sum_e f_e * mean_t P(t, e). The
    // routing fractions f_e are treated as constants.
    std::map<int, std::vector<const MoeTrace*>> per_layer;
    for (const auto& tr : traces) per_layer[tr.layer_id].push_back(&tr);
    Var lb;
    for (const auto& [layer_id, trs] : per_layer) {
        const int N = cfg_.num_experts;
        long tokens = 0;
        Eigen::VectorXd counts = Eigen::VectorXd::Zero(N);
        std::vector<Var> prob_parts;
        for (const auto* tr : trs) {
            tokens += static_cast<long>(tr->top1.size());
            for (int e : tr->top1) counts(e) += 1.0;
            prob_parts.push_back(tr->probs);
        }
        Eigen::VectorXd f = counts / static_cast<double>(tokens);
        Var probs = ag::concat_rows(prob_parts);
        Mat f_rows = f.transpose().replicate(probs->value.rows(), 1);
        Var layer_lb = ag::scale(ag::sum_all(ag::cwise_mul_const(probs, f_rows)),
                                 static_cast<double>(N) / static_cast<double>(tokens));
        lb = lb ? ag::add(lb, layer_lb) : layer_lb;
    }
    if (!lb) lb = ag::constant(Mat::Zero(1, 1));
    return {task, lb};
}

GateDecision MoEModel::gate_forward(const Eigen::VectorXd& x, int moe_layer_id,
                                    const PruningMask* mask) const {
    if (x.size() != cfg_.d_model)
        throw std::invalid_argument("gate_forward: input must have d_model entries");
    std::vector<int> retained = retained_experts(layout_, moe_layer_id, mask);
    const MoeFfnParams* p = nullptr;
    for (const auto& l : enc_layers_)
        if (l.is_moe && l.moe.global_id == moe_layer_id) p = &l.moe;
    for (const auto& l : dec_layers_)
        if (l.is_moe && l.moe.global_id == moe_layer_id) p = &l.moe;
    if (p == nullptr)
        throw std::invalid_argument("gate_forward: layer " + std::to_string(moe_layer_id) +
                                    " is not an MoE layer");

    Eigen::VectorXd logits = p->gate_w->value.transpose() * x;
    double mx = -std::numeric_limits<double>::infinity();
    for (int e : retained) mx = std::max(mx, logits(e));
    double z = 0.0;
    for (int e : retained) z += std::exp(logits(e) - mx);
    Eigen::VectorXd probs = Eigen::VectorXd::Zero(cfg_.num_experts);
    for (int e : retained) probs(e) = std::exp(logits(e) - mx) / z;

    GateDecision d;
    d.layer_id = moe_layer_id;
    d.token_index = 0;
    d.gate_probs = probs;
    auto [b, s] = top2_of(probs, retained);
    d.top1 = b;
    d.top2 = s;
    d.gate_top1 = probs(b);
    d.gate_top2 = probs(s);
    return d;
}

Eigen::VectorXd MoEModel::moe_layer_forward(const Eigen::VectorXd& x, int moe_layer_id,
                                            const PruningMask* mask) const {
    GateDecision d = gate_forward(x, moe_layer_id, mask);
    const MoeFfnParams* p = nullptr;
    for (const auto& l : enc_layers_)
        if (l.is_moe && l.moe.global_id == moe_layer_id) p = &l.moe;
    for (const auto& l : dec_layers_)
        if (l.is_moe && l.moe.global_id == moe_layer_id) p = &l.moe;

    auto run_expert = [&](int e) {
        const DenseFfnParams& f = p->experts[e];
        Eigen::VectorXd h =
            (f.w1->value.transpose() * x + f.b1->value.row(0).transpose()).cwiseMax(0.0);
        return Eigen::VectorXd(f.w2->value.transpose() * h + f.b2->value.row(0).transpose());
    };
    double g1 = d.gate_top1, g2 = d.gate_top2;
    return (g1 * run_expert(d.top1) + g2 * run_expert(d.top2)) / (g1 + g2);
}

}  // namespace moeprune
