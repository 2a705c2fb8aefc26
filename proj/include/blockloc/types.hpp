#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Dense>

namespace blockloc {

using Point2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;

/// All randomness flows through explicitly seeded streams; there is no
/// global RNG.  Independent substreams are derived from a master seed with
/// derive_seed / make_stream below.
using Rng = std::mt19937_64;

/// splitmix64 finalizer: a bijective 64-bit mixer with good avalanche.
constexpr std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

/// Derives the seed of an independent substream from a master seed, a
/// stream index (e.g. realization number) and a purpose tag.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index,
                                    std::uint64_t purpose) {
    return mix64(mix64(master ^ mix64(purpose)) + index);
}

inline Rng make_stream(std::uint64_t master, std::uint64_t index, std::uint64_t purpose) {
    return Rng{derive_seed(master, index, purpose)};
}

/// Purpose tags for substream derivation.  Each independent source of
/// randomness in a run gets its own tag so streams never collide.
namespace stream {
constexpr std::uint64_t scene = 0x5ce17e01;
constexpr std::uint64_t indirect_paths = 0x1b2d83a2;
constexpr std::uint64_t signal = 0x51674a03;
constexpr std::uint64_t model = 0x30de1f04;
constexpr std::uint64_t area = 0xa7ea0b05;
constexpr std::uint64_t order = 0x07de7206;
constexpr std::uint64_t bench = 0xbe4c8a07;
}  // namespace stream

}  // namespace blockloc
