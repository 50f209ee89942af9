#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace steerbo {

// splitmix64 finalizer, used to derive decorrelated sub-seeds from a base
// seed (one per named stream, see derive_seed below).
inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Deterministic RNG used across the whole toolkit. Wraps mt19937_64 but
// implements its own uniform/normal transforms: the std::*_distribution
// classes may produce different streams across standard libraries, and run
// logs are required to reproduce byte-for-byte.
class Rng {
public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    uint64_t next_u64() { return gen_(); }

    // uniform in [0, 1), 53 mantissa bits
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [0, n), n > 0; the float path is biased by at most
    // 2^-53 which is irrelevant at the sizes used here
    uint64_t below(uint64_t n) {
        uint64_t v = static_cast<uint64_t>(uniform() * static_cast<double>(n));
        return v < n ? v : n - 1;
    }

    // standard normal via Box-Muller with no cached spare, so the stream
    // position stays a simple function of the call count
    double normal() {
        double u1 = 1.0 - uniform(); // (0, 1], keeps log() finite
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) *
               std::cos(2.0 * 3.14159265358979323846 * u2);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 gen_;
};

// Sub-seed for a named stream under a base seed. Used so that e.g. the GP
// refit and the candidate sampler of the same BO iteration never share
// random state.
inline uint64_t derive_seed(uint64_t base, uint64_t stream) {
    return splitmix64(base ^ splitmix64(stream + 0x51ed2701a4a8f9dbULL));
}

} // namespace steerbo
