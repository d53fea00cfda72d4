#include "pamm/random.hpp"

#include <numeric>
#include <random>
#include <string>

#include "pamm/error.hpp"

namespace pamm {

std::vector<std::size_t> SeededSampler::sample(std::size_t population, std::size_t k) const {
  if (k == 0) throw ArgumentError("sample_without_replacement: k must be >= 1");
  if (k > population) {
    throw ArgumentError("sample_without_replacement: k=" + std::to_string(k) +
                        " exceeds population " + std::to_string(population));
  }
  std::vector<std::size_t> pool(population);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, population - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  pool.resize(k);
  return pool;
}

std::vector<std::size_t> sample_without_replacement(const SeededSampler& sampler,
                                                    std::size_t population,
                                                    std::size_t k) {
  return sampler.sample(population, k);
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) noexcept {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

template <typename T>
Matrix<T> gaussian_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed,
                          double stddev) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, stddev);
  Matrix<T> m(rows, cols);
  for (T& v : m.data()) v = static_cast<T>(normal(rng));
  return m;
}

template Matrix<float> gaussian_matrix<float>(std::size_t, std::size_t, std::uint64_t, double);
template Matrix<double> gaussian_matrix<double>(std::size_t, std::size_t, std::uint64_t, double);

}  // namespace pamm
