#pragma once

#include <cstdint>

#include "moeprune/mask.hpp"

namespace moeprune {

struct MemorySpec {
    std::int64_t total_params = 0;
    std::int64_t expert_params_each = 0;
    std::int64_t num_experts_total = 0;
    int bytes_per_param = 2;  // half precision

    std::int64_t dense_params() const {
        return total_params - expert_params_each * num_experts_total;
    }
    void validate() const;
};

struct MemoryEstimate {
    std::int64_t bytes = 0;
    double gib = 0.0;
};

// bytes = (dense + retained_experts * expert_params_each) * bytes_per_param.
// A null mask means all experts retained.
MemoryEstimate estimate_memory(const MemorySpec& spec, const PruningMask* mask = nullptr);
MemoryEstimate estimate_memory_retained(const MemorySpec& spec, std::int64_t retained);

}  // namespace moeprune
