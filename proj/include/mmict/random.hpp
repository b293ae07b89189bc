#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include "mmict/tensor.hpp"

namespace mmict {

using Rng = std::mt19937_64;

// Mixes a base seed with a stream tag so independent consumers never share
// a random stream.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag);
std::uint64_t derive_seed(std::uint64_t base, std::string_view tag);

Tensor random_normal(Shape shape, double stddev, Rng& rng);

}  // namespace mmict
