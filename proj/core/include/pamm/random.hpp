#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

#include "pamm/matrix.hpp"

namespace pamm {

/// Seeded uniform sampler without replacement.
///
/// Draws come from a partial Fisher-Yates shuffle driven by mt19937_64, so a
/// given (seed, population, k) always yields the same indices with this
/// build. The order of the returned indices is the draw order.
struct SeededSampler {
  static constexpr std::string_view kAlgorithm = "mt19937_64/partial-fisher-yates";

  std::uint64_t seed = 0;

  std::vector<std::size_t> sample(std::size_t population, std::size_t k) const;
};

/// k distinct indices from [0, population). Throws ArgumentError when k == 0
/// or k > population.
std::vector<std::size_t> sample_without_replacement(const SeededSampler& sampler,
                                                    std::size_t population,
                                                    std::size_t k);

/// Derives an independent stream seed (splitmix64 finalizer).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) noexcept;

/// i.i.d. normal entries with the given standard deviation.
template <typename T>
Matrix<T> gaussian_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed,
                          double stddev = 1.0);

}  // namespace pamm
