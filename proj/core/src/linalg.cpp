#include "pamm/linalg.hpp"

#include <cmath>
#include <random>
#include <string>

#include "pamm/error.hpp"

namespace pamm {
namespace {

std::string shape_str(std::size_t r, std::size_t c) {
  return std::to_string(r) + "x" + std::to_string(c);
}

template <typename T>
Matrix<T> round_to(const DenseMatrix64& acc) {
  if constexpr (std::is_same_v<T, double>) {
    return acc;
  } else {
    return acc.cast<T>();
  }
}

template <typename T>
void require_finite(const Matrix<T>& m, const char* what) {
  for (T v : m.data()) {
    if (!std::isfinite(v)) throw NumericError(std::string(what) + ": non-finite entry");
  }
}

}  // namespace

template <typename T>
DenseMatrix64 matmul_tn_f64(const Matrix<T>& a, const Matrix<T>& b) {
  if (a.rows() != b.rows()) {
    throw ShapeError("matmul_tn: " + shape_str(a.rows(), a.cols()) + "^T * " +
                     shape_str(b.rows(), b.cols()));
  }
  const std::size_t n = a.cols(), m = b.cols();
  DenseMatrix64 acc(n, m);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto ar = a.row(i);
    auto br = b.row(i);
    for (std::size_t p = 0; p < n; ++p) {
      const double av = ar[p];
      if (av == 0.0) continue;
      double* out = acc.data().data() + p * m;
      for (std::size_t q = 0; q < m; ++q) out[q] += av * static_cast<double>(br[q]);
    }
  }
  return acc;
}

template <typename T>
Matrix<T> matmul_tn(const Matrix<T>& a, const Matrix<T>& b) {
  return round_to<T>(matmul_tn_f64(a, b));
}

template <typename T>
Matrix<T> matmul(const Matrix<T>& a, const Matrix<T>& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: " + shape_str(a.rows(), a.cols()) + " * " +
                     shape_str(b.rows(), b.cols()));
  }
  const std::size_t m = b.cols();
  DenseMatrix64 acc(a.rows(), m);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* out = acc.data().data() + i * m;
    for (std::size_t p = 0; p < a.cols(); ++p) {
      const double av = a(i, p);
      if (av == 0.0) continue;
      auto br = b.row(p);
      for (std::size_t q = 0; q < m; ++q) out[q] += av * static_cast<double>(br[q]);
    }
  }
  return round_to<T>(acc);
}

template <typename T>
Matrix<T> matmul_nt(const Matrix<T>& a, const Matrix<T>& b) {
  if (a.cols() != b.cols()) {
    throw ShapeError("matmul_nt: " + shape_str(a.rows(), a.cols()) + " * " +
                     shape_str(b.rows(), b.cols()) + "^T");
  }
  Matrix<T> out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto ar = a.row(i);
    for (std::size_t j = 0; j < b.rows(); ++j) {
      auto br = b.row(j);
      double s = 0.0;
      for (std::size_t p = 0; p < a.cols(); ++p) s += static_cast<double>(ar[p]) * br[p];
      out(i, j) = static_cast<T>(s);
    }
  }
  return out;
}

template <typename T>
Matrix<T> transpose(const Matrix<T>& a) {
  Matrix<T> t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

template <typename T>
std::vector<T> row_norms(const Matrix<T>& a) {
  std::vector<T> out(a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double s = 0.0;
    for (T v : a.row(i)) s += static_cast<double>(v) * v;
    out[i] = static_cast<T>(std::sqrt(s));
  }
  return out;
}

template <typename T>
double frobenius_norm(const Matrix<T>& a) {
  double s = 0.0;
  for (T v : a.data()) s += static_cast<double>(v) * v;
  return std::sqrt(s);
}

template <typename T, typename U>
double frobenius_distance(const Matrix<T>& a, const Matrix<U>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError("frobenius_distance: " + shape_str(a.rows(), a.cols()) + " vs " +
                     shape_str(b.rows(), b.cols()));
  }
  double s = 0.0;
  auto ad = a.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < ad.size(); ++i) {
    const double d = static_cast<double>(ad[i]) - static_cast<double>(bd[i]);
    s += d * d;
  }
  return std::sqrt(s);
}

template <typename T>
SpectralNormEstimate spectral_norm(const Matrix<T>& b, int max_iters, double tol,
                                   std::uint64_t seed) {
  if (max_iters < 1) throw ArgumentError("spectral_norm: max_iters must be >= 1");
  require_finite(b, "spectral_norm");

  const std::size_t n = b.cols();
  std::vector<double> v(n), w(b.rows());
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  for (auto& x : v) x = normal(rng);

  auto normalize = [](std::vector<double>& x) {
    double s = 0.0;
    for (double e : x) s += e * e;
    s = std::sqrt(s);
    if (s > 0.0)
      for (double& e : x) e /= s;
    return s;
  };
  normalize(v);

  SpectralNormEstimate est{0.0, 0, seed};
  double prev = 0.0;
  for (int it = 1; it <= max_iters; ++it) {
    // w = B v, v = B^T w
    for (std::size_t i = 0; i < b.rows(); ++i) {
      double s = 0.0;
      auto r = b.row(i);
      for (std::size_t j = 0; j < n; ++j) s += r[j] * v[j];
      w[i] = s;
    }
    std::fill(v.begin(), v.end(), 0.0);
    for (std::size_t i = 0; i < b.rows(); ++i) {
      auto r = b.row(i);
      for (std::size_t j = 0; j < n; ++j) v[j] += r[j] * w[i];
    }
    const double lambda = normalize(v);  // ||B^T B v|| -> sigma_max^2
    est.value = std::sqrt(lambda);
    est.iterations = it;
    if (lambda == 0.0) break;
    if (it > 1 && std::abs(lambda - prev) <= tol * lambda) break;
    prev = lambda;
  }
  return est;
}

template <typename T>
Matrix<T> cosine_similarity_matrix(const Matrix<T>& a, const Matrix<T>& c,
                                   double norm_guard) {
  if (a.cols() != c.cols()) {
    throw ShapeError("cosine_similarity_matrix: " + shape_str(a.rows(), a.cols()) +
                     " vs " + shape_str(c.rows(), c.cols()));
  }
  const auto na = row_norms(a);
  const auto nc = row_norms(c);
  Matrix<T> dots = matmul_nt(a, c);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < c.rows(); ++j) {
      if (na[i] <= norm_guard || nc[j] <= norm_guard) {
        dots(i, j) = T(0);
      } else {
        dots(i, j) = static_cast<T>(static_cast<double>(dots(i, j)) /
                                    (static_cast<double>(na[i]) * nc[j]));
      }
    }
  }
  return dots;
}

#define PAMM_INSTANTIATE_LINALG(T)                                                    \
  template Matrix<T> matmul_tn<T>(const Matrix<T>&, const Matrix<T>&);                \
  template Matrix<T> matmul<T>(const Matrix<T>&, const Matrix<T>&);                   \
  template Matrix<T> matmul_nt<T>(const Matrix<T>&, const Matrix<T>&);                \
  template Matrix<T> transpose<T>(const Matrix<T>&);                                  \
  template DenseMatrix64 matmul_tn_f64<T>(const Matrix<T>&, const Matrix<T>&);        \
  template std::vector<T> row_norms<T>(const Matrix<T>&);                             \
  template double frobenius_norm<T>(const Matrix<T>&);                                \
  template SpectralNormEstimate spectral_norm<T>(const Matrix<T>&, int, double,       \
                                                 std::uint64_t);                      \
  template Matrix<T> cosine_similarity_matrix<T>(const Matrix<T>&, const Matrix<T>&, \
                                                 double);

PAMM_INSTANTIATE_LINALG(float)
PAMM_INSTANTIATE_LINALG(double)
#undef PAMM_INSTANTIATE_LINALG

template double frobenius_distance(const Matrix<float>&, const Matrix<float>&);
template double frobenius_distance(const Matrix<float>&, const Matrix<double>&);
template double frobenius_distance(const Matrix<double>&, const Matrix<float>&);
template double frobenius_distance(const Matrix<double>&, const Matrix<double>&);

}  // namespace pamm
