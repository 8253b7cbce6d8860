#pragma once

#include <cstdint>

namespace egf::flops {

// Thread-local multiply-add counter. The sparse kernels (shift, design_row,
// feature maps) report their work here; callers read deltas around the
// regions they want to measure. Counting is always on; an add is one
// thread-local increment.
std::uint64_t count();
void reset();
void add(std::uint64_t madds);

}  // namespace egf::flops
