#include "simd_tables.hpp"

#include <cmath>

// Scalar reference kernels. These define the semantics; the vectorized
// lanes are tested for equivalence against them.

namespace steerbo::simd {
namespace {

double dot_scalar(const double* a, const double* b, size_t n) {
    double acc = 0.0;
    for (size_t i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

double sum_scalar(const double* x, size_t n) {
    double acc = 0.0;
    for (size_t i = 0; i < n; ++i) acc += x[i];
    return acc;
}

void axpy_scalar(double a, const double* x, double* y, size_t n) {
    for (size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void scale_scalar(double a, double* x, size_t n) {
    for (size_t i = 0; i < n; ++i) x[i] *= a;
}

void add_scalar(const double* a, const double* b, double* out, size_t n) {
    for (size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

void hadamard_scalar(const double* a, const double* b, double* out, size_t n) {
    for (size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

void hadamard_add_scalar(const double* a, const double* b, double* out, size_t n) {
    for (size_t i = 0; i < n; ++i) out[i] += a[i] * b[i];
}

double sq_diff_sum_scalar(const double* a, const double* b, size_t n) {
    double acc = 0.0;
    for (size_t i = 0; i < n; ++i) {
        double d = a[i] - b[i];
        acc += d * d;
    }
    return acc;
}

void adam_update_scalar(double* p, double* m, double* v, const double* g,
                        size_t n, double lr, double beta1, double beta2,
                        double eps, double c1, double c2) {
    for (size_t i = 0; i < n; ++i) {
        m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
        v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
        double mhat = m[i] * c1;
        double vhat = v[i] * c2;
        p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
}

} // namespace

const KernelTable scalar_table = {
    dot_scalar,
    sum_scalar,
    axpy_scalar,
    scale_scalar,
    add_scalar,
    hadamard_scalar,
    hadamard_add_scalar,
    sq_diff_sum_scalar,
    adam_update_scalar,
};

} // namespace steerbo::simd
