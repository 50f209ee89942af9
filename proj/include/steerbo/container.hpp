#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace steerbo {

// Flat binary container used for both serialized network weights and
// cached datasets. Layout:
//   bytes 0..3   magic "STBC"
//   bytes 4..7   format version (u32 little-endian)
//   bytes 8..15  manifest length in bytes (u64 little-endian)
//   manifest     JSON: {"kind": ..., "meta": {...},
//                       "arrays": [{"name": ..., "shape": [...]}, ...]}
//   payload      row-major doubles for each array, in manifest order
struct NamedArray {
    std::string name;
    std::vector<size_t> shape;
    std::vector<double> data;

    size_t element_count() const {
        size_t n = 1;
        for (size_t e : shape) n *= e;
        return n;
    }
};

struct Container {
    std::string kind; // "weights" or "dataset"
    nlohmann::json meta = nlohmann::json::object();
    std::vector<NamedArray> arrays;

    const NamedArray* find(const std::string& name) const;
};

void save_container(const std::string& path, const Container& c);
Container load_container(const std::string& path); // throws DataError

} // namespace steerbo
