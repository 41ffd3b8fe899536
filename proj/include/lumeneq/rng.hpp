// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace lumeneq {

using Seed = std::uint64_t;
using Engine = std::mt19937_64;

/// SplitMix64 finalizer; a bijective 64-bit mixer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

constexpr std::uint64_t fnv1a64(std::string_view text,
                                std::uint64_t hash = 0xcbf29ce484222325ULL) noexcept {
    for (unsigned char c : text) {
        hash ^= c;
        hash *= 0x100000001b3ULL;
    }
    return hash;
}

/// Named independent streams. Each stage of the simulation draws from its own
/// stream so that changing one stage never perturbs the others.
enum class Stream : std::uint64_t {
    bits = 1,
    noise = 2,
    weight_init = 3,
    dropout = 4,
    shuffle = 5,
    train_link = 6,
    test_link = 7,
    oracle_instances = 8,
    gradcheck = 9,
};

/// Derives a child seed from (parent, stream, index). Pure function.
constexpr Seed derive_seed(Seed parent, Stream stream, std::uint64_t index = 0) noexcept {
    std::uint64_t h = mix64(parent ^ mix64(static_cast<std::uint64_t>(stream)));
    return mix64(h ^ mix64(index + 0x632be59bd9b4e019ULL));
}

inline Engine make_engine(Seed seed) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
    return Engine(seq);
}

inline Engine make_engine(Seed parent, Stream stream, std::uint64_t index = 0) {
    return make_engine(derive_seed(parent, stream, index));
}

}  // namespace lumeneq
