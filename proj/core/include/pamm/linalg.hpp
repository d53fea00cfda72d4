#pragma once

#include <cstdint>
#include <vector>

#include "pamm/matrix.hpp"

namespace pamm {

// Dense kernels. Products and norms accumulate in double and round once to
// the element type of the result.

/// O = A^T B for A (b x n) and B (b x m).
template <typename T>
Matrix<T> matmul_tn(const Matrix<T>& a, const Matrix<T>& b);

/// Z = A B.
template <typename T>
Matrix<T> matmul(const Matrix<T>& a, const Matrix<T>& b);

/// A B^T.
template <typename T>
Matrix<T> matmul_nt(const Matrix<T>& a, const Matrix<T>& b);

template <typename T>
Matrix<T> transpose(const Matrix<T>& a);

/// A^T B evaluated entirely in 64-bit, for baselines.
template <typename T>
DenseMatrix64 matmul_tn_f64(const Matrix<T>& a, const Matrix<T>& b);

template <typename T>
std::vector<T> row_norms(const Matrix<T>& a);

template <typename T>
double frobenius_norm(const Matrix<T>& a);

/// ||A - B||_F; shapes must match.
template <typename T, typename U>
double frobenius_distance(const Matrix<T>& a, const Matrix<U>& b);

struct SpectralNormEstimate {
  double value = 0.0;
  int iterations = 0;
  std::uint64_t start_seed = 0;
};

inline constexpr std::uint64_t kSpectralStartSeed = 0x5eed5eedULL;

/// Largest singular value by power iteration on B^T B from a seeded start
/// vector. Stops when the relative change of the estimate drops below tol.
template <typename T>
SpectralNormEstimate spectral_norm(const Matrix<T>& b, int max_iters = 1000,
                                   double tol = 1e-10,
                                   std::uint64_t seed = kSpectralStartSeed);

inline constexpr double kDefaultNormGuard = 1e-12;

/// Entry (i, j) is the cosine between A_i and C_j, or 0 when either norm is at
/// or below norm_guard.
template <typename T>
Matrix<T> cosine_similarity_matrix(const Matrix<T>& a, const Matrix<T>& c,
                                   double norm_guard = kDefaultNormGuard);

}  // namespace pamm
