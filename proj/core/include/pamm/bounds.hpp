#pragma once

#include <cstddef>
#include <vector>

#include "pamm/matrix.hpp"
#include "pamm/pamm.hpp"

namespace pamm {

/// ||B||_2^2 (eps^2 ||A_kept||_F^2 + ||A_dropped||_F^2), the right-hand side of
/// the Frobenius error bound for an unscaled (beta == 1) estimate.
///
/// Throws ArgumentError for an infinite tolerance or when comp carries a
/// beta other than 1.
template <typename T>
double error_bound_rhs(const Matrix<T>& a, const CompressedActivation<T>& comp,
                       const Matrix<T>& b);

/// Rows of `a` that keep their representative in `comp`.
template <typename T>
std::vector<std::uint8_t> kept_rows(const Matrix<T>& a, const CompressedActivation<T>& comp);

struct NeighborhoodSizes {
  std::vector<std::size_t> sizes;  ///< |N_eps(i)| per row
  std::size_t n_min = 0;
};

/// Brute-force O(b^2 n) count of rows able to represent each row within
/// tolerance epsilon.
template <typename T>
NeighborhoodSizes epsilon_neighborhood_sizes(const Matrix<T>& a, double epsilon,
                                             double norm_guard = kDefaultNormGuard);

/// Smallest integer k with k > (b / n_min) ln(b / delta).
std::size_t k_bound(std::size_t b, std::size_t n_min, double delta);

struct Footprint {
  std::size_t compressed_scalars = 0;
  std::size_t dense_scalars = 0;
  double ratio = 0.0;  ///< dense / compressed
};

Footprint memory_footprint(std::size_t b, std::size_t n, std::size_t k);

template <typename T>
Footprint memory_footprint(const CompressedActivation<T>& comp) {
  return memory_footprint(comp.b, comp.n, comp.k);
}

/// bm / (k (b + m)); above 1 the compressed product needs fewer multiplies.
double speedup_gamma(std::size_t b, std::size_t m, std::size_t k);

struct PammErrorReport {
  double relative_error = 0.0;
  double coverage = 0.0;
  std::size_t eta = 0;
  double bound_rhs = 0.0;  ///< NaN when the tolerance is infinite
  double exact_norm = 0.0;
};

/// Compares approx_matmul(comp, b) with the 64-bit exact product.
template <typename T>
PammErrorReport evaluate(const Matrix<T>& a, const CompressedActivation<T>& comp,
                         const Matrix<T>& b);

}  // namespace pamm
