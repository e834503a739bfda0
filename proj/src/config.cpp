#include "moeprune/config.hpp"

#include <stdexcept>

namespace moeprune {

const MoeLayerRef& MoeLayout::layer(int global_id) const {
    if (global_id < 0 || global_id >= num_layers())
        throw std::out_of_range("MoeLayout: no MoE layer with id " +
                                std::to_string(global_id));
    return layers[global_id];
}

MoeLayout MoeLayout::build(int enc_layers, int dec_layers, int moe_frequency,
                           int num_experts) {
    if (moe_frequency < 1) throw std::invalid_argument("moe_frequency must be >= 1");
    MoeLayout layout;
    layout.num_experts = num_experts;
    int id = 0;
    for (int l = 1; l <= enc_layers; ++l)
        if (l % moe_frequency == 0)
            layout.layers.push_back({id++, Side::encoder, l});
    for (int l = 1; l <= dec_layers; ++l)
        if (l % moe_frequency == 0)
            layout.layers.push_back({id++, Side::decoder, l});
    return layout;
}

void ModelConfig::validate() const {
    if (vocab_size < 2) throw std::invalid_argument("vocab_size must be >= 2");
    if (d_model < 1 || d_ffn < 1) throw std::invalid_argument("model dimensions must be positive");
    if (n_heads < 1 || d_model % n_heads != 0)
        throw std::invalid_argument("d_model must be divisible by n_heads");
    if (enc_layers < 1 || dec_layers < 1)
        throw std::invalid_argument("layer counts must be positive");
    if (moe_frequency < 1) throw std::invalid_argument("moe_frequency must be >= 1");
    if (top_k != 2) throw std::invalid_argument("top_k must be 2");
    if (num_experts < top_k)
        throw std::invalid_argument("num_experts must be >= top_k");
    if (beam_size < 1) throw std::invalid_argument("beam_size must be >= 1");
    if (label_smoothing < 0.0 || label_smoothing >= 1.0)
        throw std::invalid_argument("label_smoothing must be in [0, 1)");
}

}  // namespace moeprune
