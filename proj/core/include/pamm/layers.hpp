#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "pamm/matrix.hpp"
#include "pamm/pamm.hpp"

namespace pamm {

/// Learning-rate multiplier applied to weights trained through PAMM.
inline constexpr double kPammLrScale = 0.25;

/// Linear layer Z = X W whose weight gradient can be computed from a
/// compressed copy of X.
///
/// With PAMM enabled the forward pass keeps only the CompressedActivation of
/// X; backward returns the exact input gradient and the approximate weight
/// gradient. Each forward call draws generators with a fresh seed derived
/// from the configured one.
template <typename T>
class PammLinearLayer {
 public:
  struct Gradients {
    Matrix<T> grad_input;   ///< dZ W^T, b x n
    Matrix<T> grad_weight;  ///< X^T dZ (exact or approximate), n x m
  };

  explicit PammLinearLayer(Matrix<T> weight, std::optional<PammConfig> pamm = std::nullopt,
                           double lr_scale = 1.0);

  Matrix<T> forward(const Matrix<T>& x);
  /// Consumes the saved activation. Throws StateError without a prior forward.
  Gradients backward(const Matrix<T>& grad_out);

  const Matrix<T>& weight() const noexcept { return weight_; }
  Matrix<T>& weight() noexcept { return weight_; }
  bool pamm_enabled() const noexcept { return pamm_.has_value(); }
  const std::optional<PammConfig>& pamm_config() const noexcept { return pamm_; }
  double lr_scale() const noexcept { return lr_scale_; }
  void set_lr_scale(double s) noexcept { lr_scale_ = s; }

  bool holds_full_activation() const noexcept { return saved_input_.has_value(); }
  const CompressedActivation<T>* saved_compressed() const noexcept {
    return saved_compressed_ ? &*saved_compressed_ : nullptr;
  }
  /// Activation scalars currently retained for backward.
  std::size_t retained_scalars() const noexcept;
  /// Largest retained_scalars() observed since construction.
  std::size_t peak_retained_scalars() const noexcept { return peak_retained_; }

 private:
  Matrix<T> weight_;
  std::optional<PammConfig> pamm_;
  double lr_scale_;
  std::optional<Matrix<T>> saved_input_;
  std::optional<CompressedActivation<T>> saved_compressed_;
  std::uint64_t forward_calls_ = 0;
  std::size_t peak_retained_ = 0;
};

template <typename T>
Matrix<T> linear_forward(PammLinearLayer<T>& layer, const Matrix<T>& x) {
  return layer.forward(x);
}

template <typename T>
typename PammLinearLayer<T>::Gradients linear_backward(PammLinearLayer<T>& layer,
                                                       const Matrix<T>& grad_out) {
  return layer.backward(grad_out);
}

enum class OptimizerKind { sgd, adam };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adam;
  double base_lr = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Gradient descent or Adam over a fixed list of parameter slots. Each slot
/// is updated with rate base_lr * lr_scale.
template <typename T>
class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig cfg) : cfg_(cfg) {}

  /// Advances the step counter; call once before the updates of a step.
  void begin_step() { ++step_; }
  void update(std::size_t slot, Matrix<T>& param, const Matrix<T>& grad, double lr_scale);

  const OptimizerConfig& config() const noexcept { return cfg_; }
  long step() const noexcept { return step_; }

 private:
  struct Moments {
    std::vector<double> m, v;
  };
  OptimizerConfig cfg_;
  long step_ = 0;
  std::vector<Moments> moments_;
};

}  // namespace pamm
