#include "simd_tables.hpp"

#include <atomic>
#include <cstdlib>
#include <cstring>

namespace steerbo::simd {
namespace {

bool avx2_available() {
#ifdef STEERBO_HAVE_AVX2
    return avx2_cpu_ok();
#else
    return false;
#endif
}

Lane decide_initial_lane() {
    if (const char* env = std::getenv("STEERBO_SIMD")) {
        if (std::strcmp(env, "scalar") == 0) return Lane::scalar;
        if (std::strcmp(env, "avx2") == 0 && avx2_available()) return Lane::avx2;
        // unknown or unsupported value: fall through to auto-detection
    }
    return avx2_available() ? Lane::avx2 : Lane::scalar;
}

std::atomic<Lane>& active_lane_slot() {
    static std::atomic<Lane> lane{decide_initial_lane()};
    return lane;
}

} // namespace

bool lane_supported(Lane lane) {
    switch (lane) {
        case Lane::scalar: return true;
        case Lane::avx2: return avx2_available();
    }
    return false;
}

const KernelTable& table_for(Lane lane) {
#ifdef STEERBO_HAVE_AVX2
    if (lane == Lane::avx2) return avx2_table;
#endif
    (void)lane;
    return scalar_table;
}

const KernelTable& kernels() {
    return table_for(active_lane_slot().load(std::memory_order_relaxed));
}

Lane active_lane() {
    return active_lane_slot().load(std::memory_order_relaxed);
}

bool force_lane(Lane lane) {
    if (!lane_supported(lane)) return false;
    active_lane_slot().store(lane, std::memory_order_relaxed);
    return true;
}

const char* lane_name(Lane lane) {
    return lane == Lane::avx2 ? "avx2" : "scalar";
}

} // namespace steerbo::simd
