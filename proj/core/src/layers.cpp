#include "pamm/layers.hpp"

#include <algorithm>
#include <cmath>

#include "pamm/error.hpp"
#include "pamm/linalg.hpp"
#include "pamm/random.hpp"

namespace pamm {

template <typename T>
PammLinearLayer<T>::PammLinearLayer(Matrix<T> weight, std::optional<PammConfig> pamm,
                                    double lr_scale)
    : weight_(std::move(weight)), pamm_(std::move(pamm)), lr_scale_(lr_scale) {}

template <typename T>
std::size_t PammLinearLayer<T>::retained_scalars() const noexcept {
  if (saved_compressed_) return saved_compressed_->stored_scalars();
  if (saved_input_) return saved_input_->size();
  return 0;
}

template <typename T>
Matrix<T> PammLinearLayer<T>::forward(const Matrix<T>& x) {
  if (x.cols() != weight_.rows()) {
    throw ShapeError("linear_forward: input has " + std::to_string(x.cols()) +
                     " columns, weight expects " + std::to_string(weight_.rows()));
  }
  Matrix<T> z = matmul(x, weight_);
  saved_input_.reset();
  saved_compressed_.reset();
  if (pamm_) {
    PammConfig cfg = *pamm_;
    cfg.seed = derive_seed(pamm_->seed, forward_calls_);
    saved_compressed_ = compress(x, cfg);
  } else {
    saved_input_ = x;
  }
  ++forward_calls_;
  peak_retained_ = std::max(peak_retained_, retained_scalars());
  return z;
}

template <typename T>
typename PammLinearLayer<T>::Gradients PammLinearLayer<T>::backward(const Matrix<T>& grad_out) {
  if (!saved_input_ && !saved_compressed_) {
    throw StateError("linear_backward called without a preceding forward");
  }
  if (grad_out.cols() != weight_.cols()) {
    throw ShapeError("linear_backward: gradient has " + std::to_string(grad_out.cols()) +
                     " columns, weight has " + std::to_string(weight_.cols()));
  }
  Gradients g;
  g.grad_input = matmul_nt(grad_out, weight_);
  if (saved_compressed_) {
    g.grad_weight = approx_matmul(*saved_compressed_, grad_out);
  } else {
    g.grad_weight = matmul_tn(*saved_input_, grad_out);
  }
  saved_input_.reset();
  saved_compressed_.reset();
  return g;
}

template <typename T>
void Optimizer<T>::update(std::size_t slot, Matrix<T>& param, const Matrix<T>& grad,
                          double lr_scale) {
  if (param.rows() != grad.rows() || param.cols() != grad.cols()) {
    throw ShapeError("optimizer: gradient shape does not match parameter");
  }
  const double lr = cfg_.base_lr * lr_scale;
  auto p = param.data();
  auto g = grad.data();
  if (cfg_.kind == OptimizerKind::sgd) {
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = static_cast<T>(p[i] - lr * g[i]);
    return;
  }
  if (step_ < 1) throw StateError("optimizer: begin_step() not called");
  if (moments_.size() <= slot) moments_.resize(slot + 1);
  Moments& mo = moments_[slot];
  if (mo.m.size() != p.size()) {
    mo.m.assign(p.size(), 0.0);
    mo.v.assign(p.size(), 0.0);
  }
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double gi = g[i];
    mo.m[i] = cfg_.beta1 * mo.m[i] + (1.0 - cfg_.beta1) * gi;
    mo.v[i] = cfg_.beta2 * mo.v[i] + (1.0 - cfg_.beta2) * gi * gi;
    const double mhat = mo.m[i] / c1;
    const double vhat = mo.v[i] / c2;
    p[i] = static_cast<T>(p[i] - lr * mhat / (std::sqrt(vhat) + cfg_.eps));
  }
}

template class PammLinearLayer<float>;
template class PammLinearLayer<double>;
template class Optimizer<float>;
template class Optimizer<double>;

}  // namespace pamm
