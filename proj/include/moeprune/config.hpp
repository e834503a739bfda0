#pragma once

#include <vector>

#include "moeprune/common.hpp"

namespace moeprune {

// One MoE layer position in the encoder/decoder stacks. Global ids
// enumerate encoder MoE layers first, then decoder ones, both in stack order.
struct MoeLayerRef {
    int global_id = 0;
    Side side = Side::encoder;
    int stack_layer = 0;  // 1-indexed position within its stack
};

struct MoeLayout {
    std::vector<MoeLayerRef> layers;
    int num_experts = 0;

    int num_layers() const { return static_cast<int>(layers.size()); }
    int total_experts() const { return num_layers() * num_experts; }
    int count_side(Side s) const {
        int n = 0;
        for (const auto& l : layers)
            if (l.side == s) ++n;
        return n;
    }
    std::vector<MoeLayerRef> side_layers(Side s) const {
        std::vector<MoeLayerRef> out;
        for (const auto& l : layers)
            if (l.side == s) out.push_back(l);
        return out;
    }
    const MoeLayerRef& layer(int global_id) const;

    static MoeLayout build(int enc_layers, int dec_layers, int moe_frequency,
                           int num_experts);
};

struct ModelConfig {
    int vocab_size = 0;
    int d_model = 64;
    int d_ffn = 128;
    int n_heads = 2;
    int enc_layers = 4;
    int dec_layers = 4;
    int moe_frequency = 2;  // layer l (1-indexed) is MoE iff l % moe_frequency == 0
    int num_experts = 8;
    int top_k = 2;
    int beam_size = 4;
    double label_smoothing = 0.1;
    double lb_loss_coeff = 0.01;

    void validate() const;
    bool is_moe_layer(int stack_layer_1idx) const {
        return stack_layer_1idx % moe_frequency == 0;
    }
    MoeLayout moe_layout() const {
        return MoeLayout::build(enc_layers, dec_layers, moe_frequency, num_experts);
    }
};

}  // namespace moeprune
