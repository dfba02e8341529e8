#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace kinegen {

using Rng = std::mt19937_64;

/// Mixes a master seed with a named sub-stream and an index into an independent seed.
/// Used so that every stochastic stage (corpus, ae, gan, synth, exec) and every
/// per-item draw inside a stage is reproducible regardless of scheduling.
std::uint64_t derive_seed(std::uint64_t master, std::string_view stream, std::uint64_t index = 0);

inline Rng make_rng(std::uint64_t master, std::string_view stream, std::uint64_t index = 0)
{
    return Rng(derive_seed(master, stream, index));
}

}  // namespace kinegen
