#pragma once

#include <cstdint>
#include <string>

namespace steerbo {

// Shortest decimal string that parses back to exactly the same double.
// Every CSV/JSON emitter formats numbers through this so that reruns with
// identical seeds produce byte-identical files.
std::string format_double(double v);

// FNV-1a 64-bit over a byte string, rendered as 16 hex digits. Used for
// search-space digests, config digests and weight digests.
uint64_t fnv1a64(const void* data, size_t len);
std::string fnv1a64_hex(const std::string& bytes);

} // namespace steerbo
