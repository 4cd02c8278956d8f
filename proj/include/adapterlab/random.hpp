#pragma once

#include <cstdint>
#include <random>

namespace adapterlab {

using Rng = std::mt19937_64;

/// N(0, sigma^2) restricted to [-2 sigma, 2 sigma] by rejection.
/// sigma == 0 returns exactly 0.
double sample_truncated_normal(Rng& rng, double sigma);

/// Independent stream seed for run `index` under `base` (splitmix64 mix).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index);

}  // namespace adapterlab
