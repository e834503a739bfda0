#include <doctest.h>

#include "moeprune/memory.hpp"

using namespace moeprune;

TEST_CASE("memory estimate is linear in retained experts") {
    MemorySpec spec{1000000, 1000, 500, 2};
    auto full = estimate_memory(spec);
    auto half = estimate_memory_retained(spec, 250);
    auto none = estimate_memory_retained(spec, 0);
    CHECK(full.bytes == 2 * 1000000);
    CHECK(none.bytes == 2 * (1000000 - 500 * 1000));
    CHECK(half.bytes == none.bytes + (full.bytes - none.bytes) / 2);
}

TEST_CASE("memory arithmetic at published model scales") {
    // 3.3B params, half precision -> ~6.2 GiB
    MemorySpec dense{3300000000LL, 0, 0, 2};
    CHECK(estimate_memory(dense).gib == doctest::Approx(6.2).epsilon(0.02));

    // 54.5B params -> ~101.5 GiB
    MemorySpec big{54500000000LL, 33600000LL, 1536, 2};
    CHECK(estimate_memory(big).gib == doctest::Approx(101.5).epsilon(0.02));

    // the 1536 x 33.6M expert block alone -> ~96 GiB
    double expert_gib = static_cast<double>(1536LL * 33600000LL * 2) / (1024.0 * 1024.0 * 1024.0);
    CHECK(expert_gib == doctest::Approx(96.0).epsilon(0.02));

    // removing 80% of the experts fits a 32 GiB device
    auto pruned = estimate_memory_retained(big, 1536 / 5);
    CHECK(pruned.gib < 32.0);
}

TEST_CASE("memory estimate honors a pruning mask") {
    MemorySpec spec{10000, 100, 20, 2};
    PruningMask mask;
    mask.retained[0] = {0, 1, 2};
    mask.retained[1] = {4, 5};
    CHECK(estimate_memory(spec, &mask).bytes == estimate_memory_retained(spec, 5).bytes);
}

TEST_CASE("memory spec validation") {
    MemorySpec bad{100, 10, 20, 2};  // experts outweigh the total
    CHECK_THROWS(estimate_memory(bad));
    MemorySpec neg{-1, 0, 0, 2};
    CHECK_THROWS(estimate_memory(neg));
}
