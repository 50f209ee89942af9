#pragma once

#include <cstddef>

namespace steerbo::simd {

// Double-precision kernel table. Every entry has a scalar reference
// implementation; on x86-64 CPUs with AVX2+FMA a vectorized table is
// selected at runtime instead. Each lane uses a fixed accumulation order,
// so results are bit-reproducible per lane (the two lanes may differ in
// the last ulps, which the equivalence tests bound).
struct KernelTable {
    double (*dot)(const double* a, const double* b, size_t n);
    double (*sum)(const double* x, size_t n);
    void (*axpy)(double a, const double* x, double* y, size_t n);       // y += a*x
    void (*scale)(double a, double* x, size_t n);                       // x *= a
    void (*add)(const double* a, const double* b, double* out, size_t n);
    void (*hadamard)(const double* a, const double* b, double* out, size_t n);
    void (*hadamard_add)(const double* a, const double* b, double* out, size_t n);
    double (*sq_diff_sum)(const double* a, const double* b, size_t n);
    // Adam step on one flat parameter block; c1 = 1/(1-beta1^t) and
    // c2 = 1/(1-beta2^t) are the precomputed bias corrections.
    void (*adam_update)(double* p, double* m, double* v, const double* g,
                        size_t n, double lr, double beta1, double beta2,
                        double eps, double c1, double c2);
};

enum class Lane { scalar, avx2 };

// Active table. The lane is decided on first use: STEERBO_SIMD=scalar|avx2
// in the environment wins when supported, otherwise the best supported
// lane is picked (AVX2+FMA when the CPU has both, scalar elsewhere).
const KernelTable& kernels();
Lane active_lane();

// Force a lane programmatically (used by the equivalence tests). Returns
// false and leaves the active lane unchanged if unsupported on this CPU.
bool force_lane(Lane lane);

bool lane_supported(Lane lane);

// Table for an explicitly chosen lane; lane must be supported.
const KernelTable& table_for(Lane lane);

const char* lane_name(Lane lane);

} // namespace steerbo::simd
