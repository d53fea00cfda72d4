#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "pamm/linalg.hpp"
#include "pamm/matrix.hpp"

namespace pamm {

/// Tolerance value that disables the neighborhood condition.
inline constexpr double kNoTolerance = std::numeric_limits<double>::infinity();

/// Compression settings. Exactly one of `ratio` / `k` must be set.
struct PammConfig {
  std::optional<double> ratio;   ///< generators per row, k = ceil(ratio * b)
  std::optional<std::size_t> k;  ///< explicit generator count
  double epsilon = kNoTolerance;
  std::uint64_t seed = 0;
  double norm_guard = kDefaultNormGuard;
  /// When false the product estimate is not rescaled for dropped rows
  /// (beta is stored as 1).
  bool apply_beta = true;

  static PammConfig with_ratio(double r, double epsilon = kNoTolerance,
                               std::uint64_t seed = 0);
  static PammConfig with_k(std::size_t k, double epsilon = kNoTolerance,
                           std::uint64_t seed = 0);

  /// Generator count for a matrix with b rows. Throws ArgumentError when the
  /// config is inconsistent or the count falls outside [1, b].
  std::size_t effective_k(std::size_t b) const;
};

/// Compressed form of A (b x n): k generator rows, a generator index and a
/// projection coefficient per row, and the dropped-row correction beta.
///
/// Dropped rows carry alpha == 0. Rows whose norm is at or below the norm
/// guard are represented by zero and never count as dropped.
template <typename T>
struct CompressedActivation {
  Matrix<T> generators;                 ///< C, k x n
  std::vector<std::uint32_t> assignment;  ///< f, length b, values in [0, k)
  std::vector<T> alpha;                 ///< length b
  std::optional<double> beta;           ///< b / (b - eta); empty when eta == b
  std::size_t b = 0;
  std::size_t n = 0;
  std::size_t k = 0;
  std::size_t eta = 0;  ///< dropped rows
  double epsilon = kNoTolerance;
  std::uint64_t seed = 0;
  double norm_guard = kDefaultNormGuard;

  double coverage() const { return b ? static_cast<double>(b - eta) / b : 0.0; }
  /// k*n + 2b scalars: generators, coefficients and indices.
  std::size_t stored_scalars() const { return k * n + 2 * b; }
};

template <typename T>
struct Assignment {
  std::vector<std::uint32_t> f;
  std::vector<T> alpha;
};

/// For each row picks the generator of largest |cosine| (smallest index on
/// ties) and the orthogonal projection coefficient onto it.
template <typename T>
Assignment<T> assign_and_project(const Matrix<T>& a, const Matrix<T>& c,
                                 double norm_guard = kDefaultNormGuard);

template <typename T>
struct NeighborhoodOutcome {
  std::vector<T> alpha;
  std::size_t eta = 0;
  std::vector<std::uint8_t> kept;  ///< 1 where the row keeps its representative
};

/// Zeroes alpha for every row whose representative misses the tolerance
/// ||A_i - alpha_i C_f(i)|| <= epsilon ||A_i||.
template <typename T>
NeighborhoodOutcome<T> apply_neighborhood_condition(const Matrix<T>& a, const Matrix<T>& c,
                                                    std::span<const std::uint32_t> f,
                                                    std::span<const T> alpha, double epsilon,
                                                    double norm_guard = kDefaultNormGuard);

/// b / (b - eta), or nullopt when every row was dropped.
std::optional<double> compute_beta(std::size_t b, std::size_t eta);

/// Generator rows drawn for a b-row input under cfg.
std::vector<std::size_t> select_generators(std::size_t b, const PammConfig& cfg);

template <typename T>
CompressedActivation<T> compress(const Matrix<T>& a, const PammConfig& cfg);

/// Same as compress but with the generator rows fixed by the caller.
/// cfg.ratio / cfg.k are ignored.
template <typename T>
CompressedActivation<T> compress_with_generators(const Matrix<T>& a,
                                                 std::span<const std::size_t> generator_rows,
                                                 const PammConfig& cfg);

template <typename T>
CompressedActivation<T> compress_with_generators(const Matrix<T>& a,
                                                 std::span<const std::size_t> generator_rows,
                                                 double epsilon);

/// beta * C^T Btilde where Btilde_j = sum_{i: f(i)=j} alpha_i B_i.
template <typename T>
Matrix<T> approx_matmul(const CompressedActivation<T>& comp, const Matrix<T>& b);

/// Row i is alpha_i * C_f(i). Beta is not applied.
template <typename T>
Matrix<T> reconstruct(const CompressedActivation<T>& comp);

/// ||exact - approx||_F / ||exact||_F.
template <typename T, typename U>
double relative_error(const Matrix<T>& exact, const Matrix<U>& approx);

}  // namespace pamm
