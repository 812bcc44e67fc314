// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>

namespace rpcc {

/// Stateless splitmix64 mix of a base seed and a salt, used to hand
/// independent deterministic streams to the noise draw, the factor
/// initializer, and each synthetic trial.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t salt) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace rpcc
