#include "pamm/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "pamm/error.hpp"
#include "pamm/linalg.hpp"
#include "residual.hpp"

namespace pamm {
namespace {

template <typename T>
double bound_rhs_unchecked(const Matrix<T>& a, const CompressedActivation<T>& comp,
                           const Matrix<T>& b) {
  const auto kept = kept_rows(a, comp);
  double kept_sq = 0.0, dropped_sq = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double s = 0.0;
    for (T v : a.row(i)) s += static_cast<double>(v) * v;
    (kept[i] ? kept_sq : dropped_sq) += s;
  }
  const double spec = spectral_norm(b, 5000, 1e-12).value;
  return spec * spec * (comp.epsilon * comp.epsilon * kept_sq + dropped_sq);
}

}  // namespace

template <typename T>
std::vector<std::uint8_t> kept_rows(const Matrix<T>& a, const CompressedActivation<T>& comp) {
  if (a.rows() != comp.b || a.cols() != comp.n) {
    throw ShapeError("kept_rows: input does not match compressed shape");
  }
  std::vector<std::uint8_t> kept(comp.b, 1);
  for (std::size_t i = 0; i < comp.b; ++i) {
    kept[i] = detail::within_tolerance(a.row(i), comp.generators.row(comp.assignment[i]),
                                       comp.alpha[i], comp.epsilon, comp.norm_guard)
                  ? 1
                  : 0;
  }
  return kept;
}

template <typename T>
double error_bound_rhs(const Matrix<T>& a, const CompressedActivation<T>& comp,
                       const Matrix<T>& b) {
  if (std::isinf(comp.epsilon)) {
    throw ArgumentError("error_bound_rhs: bound is vacuous for an infinite tolerance");
  }
  if (!comp.beta || *comp.beta != 1.0) {
    throw ArgumentError("error_bound_rhs: compressed input must be built with beta disabled");
  }
  if (b.rows() != comp.b) throw ShapeError("error_bound_rhs: B row count mismatch");
  return bound_rhs_unchecked(a, comp, b);
}

template <typename T>
NeighborhoodSizes epsilon_neighborhood_sizes(const Matrix<T>& a, double epsilon,
                                             double norm_guard) {
  if (std::isnan(epsilon) || epsilon < 0.0) {
    throw ArgumentError("epsilon_neighborhood_sizes: epsilon must be >= 0");
  }
  const std::size_t b = a.rows();
  std::vector<double> norms(b), sq(b);
  for (std::size_t i = 0; i < b; ++i) {
    sq[i] = detail::dot(a.row(i), a.row(i));
    norms[i] = std::sqrt(sq[i]);
  }

  NeighborhoodSizes out{std::vector<std::size_t>(b, 0), 0};
  for (std::size_t i = 0; i < b; ++i) {
    if (norms[i] <= norm_guard) {
      out.sizes[i] = b;
      continue;
    }
    const double limit = epsilon * norms[i];
    std::size_t count = 0;
    for (std::size_t j = 0; j < b; ++j) {
      if (norms[j] <= norm_guard) continue;
      if (std::isinf(epsilon)) {
        ++count;
        continue;
      }
      const double coef = detail::dot(a.row(i), a.row(j)) / sq[j];
      if (detail::residual(a.row(i), a.row(j), coef) <= limit) ++count;
    }
    out.sizes[i] = count;
  }
  out.n_min = b ? *std::min_element(out.sizes.begin(), out.sizes.end()) : 0;
  return out;
}

std::size_t k_bound(std::size_t b, std::size_t n_min, double delta) {
  if (!(delta > 0.0 && delta < 1.0)) {
    throw ArgumentError("k_bound: delta must lie in (0, 1)");
  }
  if (n_min < 1) throw ArgumentError("k_bound: n_min must be >= 1");
  const double x = static_cast<double>(b) / static_cast<double>(n_min) *
                   std::log(static_cast<double>(b) / delta);
  return static_cast<std::size_t>(std::floor(x)) + 1;
}

Footprint memory_footprint(std::size_t b, std::size_t n, std::size_t k) {
  Footprint fp;
  fp.compressed_scalars = k * n + 2 * b;
  fp.dense_scalars = b * n;
  fp.ratio = static_cast<double>(fp.dense_scalars) / static_cast<double>(fp.compressed_scalars);
  return fp;
}

double speedup_gamma(std::size_t b, std::size_t m, std::size_t k) {
  if (b == 0 || m == 0 || k == 0) throw ArgumentError("speedup_gamma: arguments must be positive");
  return static_cast<double>(b) * static_cast<double>(m) /
         (static_cast<double>(k) * (static_cast<double>(b) + static_cast<double>(m)));
}

template <typename T>
PammErrorReport evaluate(const Matrix<T>& a, const CompressedActivation<T>& comp,
                         const Matrix<T>& b) {
  const DenseMatrix64 exact = matmul_tn_f64(a, b);
  const Matrix<T> approx = approx_matmul(comp, b);
  PammErrorReport r;
  r.exact_norm = frobenius_norm(exact);
  r.relative_error = relative_error(exact, approx);
  r.coverage = comp.coverage();
  r.eta = comp.eta;
  r.bound_rhs = std::isinf(comp.epsilon) ? std::nan("") : bound_rhs_unchecked(a, comp, b);
  return r;
}

#define PAMM_INSTANTIATE_BOUNDS(T)                                                          \
  template std::vector<std::uint8_t> kept_rows<T>(const Matrix<T>&,                         \
                                                  const CompressedActivation<T>&);          \
  template double error_bound_rhs<T>(const Matrix<T>&, const CompressedActivation<T>&,      \
                                     const Matrix<T>&);                                     \
  template NeighborhoodSizes epsilon_neighborhood_sizes<T>(const Matrix<T>&, double,        \
                                                           double);                         \
  template PammErrorReport evaluate<T>(const Matrix<T>&, const CompressedActivation<T>&,    \
                                       const Matrix<T>&);

PAMM_INSTANTIATE_BOUNDS(float)
PAMM_INSTANTIATE_BOUNDS(double)
#undef PAMM_INSTANTIATE_BOUNDS

}  // namespace pamm
