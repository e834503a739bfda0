#include "moeprune/memory.hpp"

#include <stdexcept>

namespace moeprune {

void MemorySpec::validate() const {
    if (total_params < 0 || expert_params_each < 0 || num_experts_total < 0)
        throw std::invalid_argument("memory spec fields must be nonnegative");
    if (bytes_per_param < 1) throw std::invalid_argument("bytes_per_param must be positive");
    if (dense_params() < 0)
        throw std::invalid_argument("expert parameters exceed the total parameter count");
}

MemoryEstimate estimate_memory_retained(const MemorySpec& spec, std::int64_t retained) {
    spec.validate();
    if (retained < 0 || retained > spec.num_experts_total)
        throw std::invalid_argument("retained expert count out of range");
    MemoryEstimate est;
    est.bytes = (spec.dense_params() + retained * spec.expert_params_each) *
                spec.bytes_per_param;
    est.gib = static_cast<double>(est.bytes) / (1024.0 * 1024.0 * 1024.0);
    return est;
}

MemoryEstimate estimate_memory(const MemorySpec& spec, const PruningMask* mask) {
    std::int64_t retained = spec.num_experts_total;
    if (mask != nullptr) retained = mask->total_retained();
    return estimate_memory_retained(spec, retained);
}

}  // namespace moeprune
