#include "dcmd/rng.hpp"

namespace dcmd {

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

Rng derive_rng(std::uint64_t seed, std::string_view name) {
  return Rng(splitmix64(seed ^ fnv1a64(name)));
}

Rng derive_rng(std::uint64_t seed, std::string_view name, std::uint64_t index) {
  return Rng(splitmix64(splitmix64(seed ^ fnv1a64(name)) + index));
}

Mat standard_normal(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
  // A fresh distribution per call keeps the stream position a pure function
  // of the engine state, which checkpoints capture.
  std::normal_distribution<double> normal(0.0, 1.0);
  Mat out(rows, cols);
  for (Eigen::Index i = 0; i < out.size(); ++i) out.data()[i] = normal(rng);
  return out;
}

}  // namespace dcmd
