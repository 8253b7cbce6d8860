#pragma once

#include <cstdint>
#include <random>

namespace egf {

// splitmix64 finalizer; derives independent stream seeds from (seed, salt)
// so that one experiment seed can fan out to graph / signal / attachment /
// feature-map generators without correlation.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt);

std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t salt = 0);

}  // namespace egf
