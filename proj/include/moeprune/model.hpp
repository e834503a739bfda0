#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "moeprune/autograd.hpp"
#include "moeprune/config.hpp"
#include "moeprune/mask.hpp"

namespace moeprune {

// One routing decision of the gating network for a single token.
struct GateDecision {
    int layer_id = 0;
    int token_index = 0;
    Eigen::VectorXd gate_probs;  // over all N experts, zeros at pruned ones
    int top1 = 0;
    int top2 = 0;
    double gate_top1 = 0.0;
    double gate_top2 = 0.0;
};

using GateRecordFn = std::function<void(const GateDecision&)>;

// Token-level gate probabilities of one MoE layer kept alive for the
// load-balancing loss.
struct MoeTrace {
    int layer_id = 0;
    ag::Var probs;           // T x N softmax output
    std::vector<int> top1;   // per token
};

struct TrainSample {
    std::vector<int> enc_input;  // source language token first, eos last
    std::vector<int> dec_input;  // target language token first
    std::vector<int> labels;     // dec_input shifted left, eos last
};

struct LayerNormParams {
    ag::Var gain, bias;
};

struct AttentionParams {
    ag::Var wq, wk, wv, wo, bq, bk, bv, bo;
};

struct DenseFfnParams {
    ag::Var w1, b1, w2, b2;
};

struct MoeFfnParams {
    int global_id = 0;
    ag::Var gate_w;  // d x N
    std::vector<DenseFfnParams> experts;
};

struct EncoderLayer {
    LayerNormParams ln1, ln2;
    AttentionParams self_attn;
    bool is_moe = false;
    DenseFfnParams ffn;
    MoeFfnParams moe;
};

struct DecoderLayer {
    LayerNormParams ln1, ln2, ln3;
    AttentionParams self_attn, cross_attn;
    bool is_moe = false;
    DenseFfnParams ffn;
    MoeFfnParams moe;
};

class MoEModel {
  public:
    MoEModel(ModelConfig cfg, std::uint64_t seed);

    const ModelConfig& config() const { return cfg_; }
    const MoeLayout& layout() const { return layout_; }

    std::vector<std::pair<std::string, ag::Var>>& named_parameters() { return params_; }
    const std::vector<std::pair<std::string, ag::Var>>& named_parameters() const {
        return params_;
    }

    // Returns the encoder memory (T x d). Gate decisions of encoder MoE
    // layers go to `rec` when set; traces collect gate probs for training.
    ag::Var encode(const std::vector<int>& enc_input, const PruningMask* mask = nullptr,
                   const GateRecordFn& rec = nullptr,
                   std::vector<MoeTrace>* traces = nullptr) const;

    // Next-token logits for every decoder position (T x vocab).
    ag::Var decoder_logits(const ag::Var& memory, const std::vector<int>& dec_input,
                           const PruningMask* mask = nullptr,
                           const GateRecordFn& rec = nullptr,
                           std::vector<MoeTrace>* traces = nullptr) const;

    // Label-smoothed cross entropy and load-balancing loss over a batch.
    // The lb term is summed over MoE layers; total = task + lb_coeff * lb.
    std::pair<ag::Var, ag::Var> loss(const std::vector<TrainSample>& batch) const;

    // Single-token gating, as used at every MoE layer.
    GateDecision gate_forward(const Eigen::VectorXd& x, int moe_layer_id,
                              const PruningMask* mask = nullptr) const;

    // Full MoE layer on one token: gate, run the two selected experts,
    // renormalized weighted sum of their outputs.
    Eigen::VectorXd moe_layer_forward(const Eigen::VectorXd& x, int moe_layer_id,
                                      const PruningMask* mask = nullptr) const;

  private:
    ag::Var attention(const AttentionParams& p, const ag::Var& q_in, const ag::Var& kv_in,
                      bool causal) const;
    ag::Var dense_ffn(const DenseFfnParams& p, const ag::Var& x) const;
    ag::Var moe_ffn(const MoeFfnParams& p, const ag::Var& x, const PruningMask* mask,
                    const GateRecordFn& rec, std::vector<MoeTrace>* traces) const;
    ag::Var embed(const std::vector<int>& tokens) const;

    ModelConfig cfg_;
    MoeLayout layout_;
    ag::Var embedding_;  // vocab x d
    ag::Var out_w_, out_b_;
    LayerNormParams enc_final_ln_, dec_final_ln_;
    std::vector<EncoderLayer> enc_layers_;
    std::vector<DecoderLayer> dec_layers_;
    std::vector<std::pair<std::string, ag::Var>> params_;
};

// Retained expert ids of `mask` for layer `layer_id`, or all experts when
// mask is null. Throws when fewer than two experts remain.
std::vector<int> retained_experts(const MoeLayout& layout, int layer_id,
                                  const PruningMask* mask);

}  // namespace moeprune
