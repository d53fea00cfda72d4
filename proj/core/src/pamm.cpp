#include "pamm/pamm.hpp"

#include <cmath>
#include <string>

#include "pamm/error.hpp"
#include "pamm/random.hpp"
#include "residual.hpp"

namespace pamm {

PammConfig PammConfig::with_ratio(double r, double epsilon, std::uint64_t seed) {
  PammConfig cfg;
  cfg.ratio = r;
  cfg.epsilon = epsilon;
  cfg.seed = seed;
  return cfg;
}

PammConfig PammConfig::with_k(std::size_t k, double epsilon, std::uint64_t seed) {
  PammConfig cfg;
  cfg.k = k;
  cfg.epsilon = epsilon;
  cfg.seed = seed;
  return cfg;
}

std::size_t PammConfig::effective_k(std::size_t b) const {
  if (ratio.has_value() == k.has_value()) {
    throw ArgumentError("PammConfig: set exactly one of ratio and k");
  }
  std::size_t kk = 0;
  if (ratio) {
    const double r = *ratio;
    if (!(r > 0.0 && r <= 1.0)) {
      throw ArgumentError("PammConfig: ratio must lie in (0, 1], got " + std::to_string(r));
    }
    kk = static_cast<std::size_t>(std::ceil(r * static_cast<double>(b)));
  } else {
    kk = *k;
  }
  if (kk < 1 || kk > b) {
    throw ArgumentError("PammConfig: generator count " + std::to_string(kk) +
                        " outside [1, " + std::to_string(b) + "]");
  }
  return kk;
}

template <typename T>
Assignment<T> assign_and_project(const Matrix<T>& a, const Matrix<T>& c, double norm_guard) {
  if (a.cols() != c.cols()) {
    throw ShapeError("assign_and_project: A has " + std::to_string(a.cols()) +
                     " columns, C has " + std::to_string(c.cols()));
  }
  if (c.rows() == 0) throw ArgumentError("assign_and_project: no generators");

  const std::size_t b = a.rows(), k = c.rows();
  std::vector<double> sqa(b), sqc(k);
  for (std::size_t i = 0; i < b; ++i) sqa[i] = detail::dot(a.row(i), a.row(i));
  for (std::size_t j = 0; j < k; ++j) sqc[j] = detail::dot(c.row(j), c.row(j));
  const double guard2 = norm_guard * norm_guard;

  // Squared cosines in double: a row scored against its own copy gives exactly 1,
  // so near-collinear rows cannot tie with it through rounding.
  Assignment<T> out{std::vector<std::uint32_t>(b, 0), std::vector<T>(b, T(0))};
  for (std::size_t i = 0; i < b; ++i) {
    if (sqa[i] <= guard2) continue;
    double best = -1.0;
    std::size_t arg = 0;
    bool found = false;
    for (std::size_t j = 0; j < k; ++j) {
      if (sqc[j] <= guard2) continue;
      const double d = detail::dot(a.row(i), c.row(j));
      const double s = (d * d) / (sqa[i] * sqc[j]);
      if (!found || s > best) {
        best = s;
        arg = j;
        found = true;
      }
    }
    if (!found) continue;
    out.f[i] = static_cast<std::uint32_t>(arg);
    out.alpha[i] = static_cast<T>(detail::dot(a.row(i), c.row(arg)) / sqc[arg]);
  }
  return out;
}

template <typename T>
NeighborhoodOutcome<T> apply_neighborhood_condition(const Matrix<T>& a, const Matrix<T>& c,
                                                    std::span<const std::uint32_t> f,
                                                    std::span<const T> alpha, double epsilon,
                                                    double norm_guard) {
  if (std::isnan(epsilon) || epsilon < 0.0) {
    throw ArgumentError("apply_neighborhood_condition: epsilon must be >= 0");
  }
  if (f.size() != a.rows() || alpha.size() != a.rows()) {
    throw ShapeError("apply_neighborhood_condition: f/alpha length must equal rows of A");
  }
  if (a.cols() != c.cols()) throw ShapeError("apply_neighborhood_condition: column mismatch");

  NeighborhoodOutcome<T> out{std::vector<T>(alpha.begin(), alpha.end()), 0,
                             std::vector<std::uint8_t>(a.rows(), 1)};
  for (std::size_t i = 0; i < a.rows(); ++i) {
    if (f[i] >= c.rows()) throw ArgumentError("apply_neighborhood_condition: f out of range");
    if (!detail::within_tolerance(a.row(i), c.row(f[i]), alpha[i], epsilon, norm_guard)) {
      out.alpha[i] = T(0);
      out.kept[i] = 0;
      ++out.eta;
    }
  }
  return out;
}

std::optional<double> compute_beta(std::size_t b, std::size_t eta) {
  if (eta > b) {
    throw ArgumentError("compute_beta: eta=" + std::to_string(eta) + " exceeds b=" +
                        std::to_string(b));
  }
  if (eta == b) return std::nullopt;
  return static_cast<double>(b) / static_cast<double>(b - eta);
}

std::vector<std::size_t> select_generators(std::size_t b, const PammConfig& cfg) {
  return sample_without_replacement(SeededSampler{cfg.seed}, b, cfg.effective_k(b));
}

template <typename T>
CompressedActivation<T> compress(const Matrix<T>& a, const PammConfig& cfg) {
  if (a.rows() == 0 || a.cols() == 0) throw ArgumentError("compress: empty input");
  const auto rows = select_generators(a.rows(), cfg);
  return compress_with_generators(a, rows, cfg);
}

template <typename T>
CompressedActivation<T> compress_with_generators(const Matrix<T>& a,
                                                 std::span<const std::size_t> generator_rows,
                                                 const PammConfig& cfg) {
  const std::size_t b = a.rows(), n = a.cols();
  if (b == 0 || n == 0) throw ArgumentError("compress: empty input");
  if (generator_rows.empty()) throw ArgumentError("compress: no generator rows");

  std::vector<std::uint8_t> seen(b, 0);
  Matrix<T> c(generator_rows.size(), n);
  for (std::size_t j = 0; j < generator_rows.size(); ++j) {
    const std::size_t r = generator_rows[j];
    if (r >= b) {
      throw ArgumentError("compress: generator row " + std::to_string(r) + " out of range");
    }
    if (seen[r]++) throw ArgumentError("compress: duplicate generator row " + std::to_string(r));
    std::copy(a.row(r).begin(), a.row(r).end(), c.row(j).begin());
  }

  auto assign = assign_and_project(a, c, cfg.norm_guard);
  auto cond = apply_neighborhood_condition<T>(a, c, assign.f, assign.alpha, cfg.epsilon,
                                              cfg.norm_guard);

  CompressedActivation<T> out;
  out.b = b;
  out.n = n;
  out.k = c.rows();
  out.generators = std::move(c);
  out.assignment = std::move(assign.f);
  out.alpha = std::move(cond.alpha);
  out.eta = cond.eta;
  out.beta = cfg.apply_beta ? compute_beta(b, cond.eta) : std::optional<double>(1.0);
  out.epsilon = cfg.epsilon;
  out.seed = cfg.seed;
  out.norm_guard = cfg.norm_guard;
  return out;
}

template <typename T>
CompressedActivation<T> compress_with_generators(const Matrix<T>& a,
                                                 std::span<const std::size_t> generator_rows,
                                                 double epsilon) {
  PammConfig cfg;
  cfg.epsilon = epsilon;
  return compress_with_generators(a, generator_rows, cfg);
}

template <typename T>
Matrix<T> approx_matmul(const CompressedActivation<T>& comp, const Matrix<T>& b) {
  if (b.rows() != comp.b) {
    throw ShapeError("approx_matmul: B has " + std::to_string(b.rows()) +
                     " rows, compressed input has " + std::to_string(comp.b));
  }
  const std::size_t m = b.cols();
  if (!comp.beta) return Matrix<T>(comp.n, m);

  // Btilde_j = sum_{i: f(i)=j} alpha_i B_i
  Matrix<double> btilde(comp.k, m);
  for (std::size_t i = 0; i < comp.b; ++i) {
    const double w = comp.alpha[i];
    if (w == 0.0) continue;
    auto dst = btilde.row(comp.assignment[i]);
    auto src = b.row(i);
    for (std::size_t q = 0; q < m; ++q) dst[q] += w * static_cast<double>(src[q]);
  }
  DenseMatrix64 o = matmul_tn_f64(comp.generators.template cast<double>(), btilde);
  const double beta = *comp.beta;
  Matrix<T> out(comp.n, m);
  for (std::size_t i = 0; i < o.size(); ++i) out.data()[i] = static_cast<T>(beta * o.data()[i]);
  return out;
}

template <typename T>
Matrix<T> reconstruct(const CompressedActivation<T>& comp) {
  Matrix<T> out(comp.b, comp.n);
  for (std::size_t i = 0; i < comp.b; ++i) {
    const T w = comp.alpha[i];
    if (w == T(0)) continue;
    auto src = comp.generators.row(comp.assignment[i]);
    auto dst = out.row(i);
    for (std::size_t p = 0; p < comp.n; ++p) dst[p] = w * src[p];
  }
  return out;
}

template <typename T, typename U>
double relative_error(const Matrix<T>& exact, const Matrix<U>& approx) {
  const double ref = frobenius_norm(exact);
  if (!(ref > 0.0)) throw UndefinedMetricError("relative_error: exact product has zero norm");
  return frobenius_distance(exact, approx) / ref;
}

#define PAMM_INSTANTIATE_CORE(T)                                                             \
  template Assignment<T> assign_and_project<T>(const Matrix<T>&, const Matrix<T>&, double);  \
  template NeighborhoodOutcome<T> apply_neighborhood_condition<T>(                           \
      const Matrix<T>&, const Matrix<T>&, std::span<const std::uint32_t>, std::span<const T>, \
      double, double);                                                                       \
  template CompressedActivation<T> compress<T>(const Matrix<T>&, const PammConfig&);         \
  template CompressedActivation<T> compress_with_generators<T>(                              \
      const Matrix<T>&, std::span<const std::size_t>, const PammConfig&);                    \
  template CompressedActivation<T> compress_with_generators<T>(                              \
      const Matrix<T>&, std::span<const std::size_t>, double);                               \
  template Matrix<T> approx_matmul<T>(const CompressedActivation<T>&, const Matrix<T>&);     \
  template Matrix<T> reconstruct<T>(const CompressedActivation<T>&);

PAMM_INSTANTIATE_CORE(float)
PAMM_INSTANTIATE_CORE(double)
#undef PAMM_INSTANTIATE_CORE

template double relative_error(const Matrix<float>&, const Matrix<float>&);
template double relative_error(const Matrix<double>&, const Matrix<float>&);
template double relative_error(const Matrix<float>&, const Matrix<double>&);
template double relative_error(const Matrix<double>&, const Matrix<double>&);

}  // namespace pamm
