#include "egf/flops.hpp"

namespace egf::flops {

namespace {
thread_local std::uint64_t g_madds = 0;
}

std::uint64_t count() { return g_madds; }

void reset() { g_madds = 0; }

void add(std::uint64_t madds) { g_madds += madds; }

}  // namespace egf::flops
