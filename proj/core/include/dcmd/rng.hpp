#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include "dcmd/common.hpp"

namespace dcmd {

using Rng = std::mt19937_64;

/// Derives an independent stream from a root seed and a component name.
/// The mapping is stable across platforms (FNV-1a over the name + splitmix).
Rng derive_rng(std::uint64_t seed, std::string_view name);
Rng derive_rng(std::uint64_t seed, std::string_view name, std::uint64_t index);

/// Fills a matrix with i.i.d. N(0,1) draws.
Mat standard_normal(Rng& rng, Eigen::Index rows, Eigen::Index cols);

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL);

}  // namespace dcmd
