#pragma once

#include "steerbo/simd.hpp"

// Internal linkage glue between the per-lane kernel translation units and
// the dispatcher. Not installed; include from src/ only.

namespace steerbo::simd {

extern const KernelTable scalar_table;

#ifdef STEERBO_HAVE_AVX2
extern const KernelTable avx2_table;
bool avx2_cpu_ok();
#endif

} // namespace steerbo::simd
