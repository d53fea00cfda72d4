#pragma once

#include <cmath>
#include <span>

namespace pamm::detail {

template <typename T>
double norm2(std::span<const T> x) {
  double s = 0.0;
  for (T v : x) s += static_cast<double>(v) * v;
  return std::sqrt(s);
}

template <typename T>
double dot(std::span<const T> x, std::span<const T> y) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += static_cast<double>(x[i]) * y[i];
  return s;
}

/// ||x - coef * y||
template <typename T>
double residual(std::span<const T> x, std::span<const T> y, double coef) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = static_cast<double>(x[i]) - coef * static_cast<double>(y[i]);
    s += d * d;
  }
  return std::sqrt(s);
}

/// Whether row x keeps representative coef * y under tolerance epsilon.
/// Near-zero rows are exact; a near-zero generator cannot represent anything.
template <typename T>
bool within_tolerance(std::span<const T> x, std::span<const T> y, T coef, double epsilon,
                      double norm_guard) {
  const double nx = norm2(x);
  if (nx <= norm_guard) return true;
  if (norm2(y) <= norm_guard) return false;
  if (std::isinf(epsilon)) return true;
  return residual(x, y, static_cast<double>(coef)) <= epsilon * nx;
}

}  // namespace pamm::detail
