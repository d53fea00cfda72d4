#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pamm/layers.hpp"
#include "pamm/matrix.hpp"
#include "pamm/pamm.hpp"

namespace pamm {

/// Token batch: `batch` sequences of `seq_len` tokens, flattened row-major.
struct TokenBatch {
  std::size_t batch = 0;
  std::size_t seq_len = 0;
  std::vector<std::uint32_t> tokens;
  std::vector<std::uint32_t> targets;

  std::size_t rows() const noexcept { return batch * seq_len; }
};

enum class ToyTask {
  copy_previous,  ///< target[t] = token[t-1]; position 0 is unpredictable
  reverse,        ///< target[t] = token[L-1-t]
};

/// Uniform random tokens with targets defined by `task`.
TokenBatch make_batch(ToyTask task, std::size_t batch, std::size_t seq_len,
                      std::size_t vocab, std::uint64_t seed);

struct ToyModelConfig {
  std::size_t vocab = 16;
  std::size_t seq_len = 8;
  std::size_t d_model = 32;
  std::size_t blocks = 1;  ///< attention blocks; 0 gives embedding -> classifier
  std::optional<PammConfig> pamm;  ///< applied to the Q/K/V projections
  double pamm_lr_scale = kPammLrScale;
  bool zero_head = false;
  std::uint64_t init_seed = 1;
};

/// Single-head causal attention block: H + softmax(QK^T / sqrt(d)) V W_o.
template <typename T>
struct AttentionBlock {
  PammLinearLayer<T> wq, wk, wv;
  Matrix<T> wo;
};

template <typename T>
struct ParamRef {
  std::string name;
  Matrix<T>* value;
  double lr_scale;
};

/// Toy transformer used by the training harness: token + position
/// embeddings, residual attention blocks, linear classifier, mean
/// cross-entropy. Backward is hand-written against cached forward values.
template <typename T>
class ToyModel {
 public:
  explicit ToyModel(const ToyModelConfig& cfg);

  const ToyModelConfig& config() const noexcept { return cfg_; }

  /// Forward pass; caches what backward() needs.
  T forward(const TokenBatch& batch);
  /// Gradients of the last forward loss, one per parameters() entry.
  std::vector<Matrix<T>> backward();
  /// Loss without touching the cache or the layers' saved activations.
  /// Returned unrounded so finite differences are not limited by T.
  double loss(const TokenBatch& batch);

  std::vector<ParamRef<T>> parameters();

  std::vector<AttentionBlock<T>>& blocks() noexcept { return blocks_; }
  Matrix<T>& embedding() noexcept { return embed_; }
  Matrix<T>& head() noexcept { return head_; }

  /// Output of the last forward through each Q/K/V projection (for tests).
  const std::vector<Matrix<T>>& last_projection_outputs() const noexcept { return proj_out_; }
  /// Input gradients returned by each Q/K/V projection in the last backward.
  const std::vector<Matrix<T>>& last_projection_input_grads() const noexcept {
    return proj_grad_in_;
  }

 private:
  struct BlockCache {
    Matrix<T> q, k, v;
    std::vector<Matrix<T>> probs;  ///< per sequence, L x L
    Matrix<T> attn;                ///< P V, b x d
  };

  Matrix<T> embed_rows(const TokenBatch& batch) const;
  double forward_impl(const TokenBatch& batch, bool record);

  ToyModelConfig cfg_;
  Matrix<T> embed_;  ///< vocab x d
  Matrix<T> pos_;    ///< seq_len x d
  std::vector<AttentionBlock<T>> blocks_;
  Matrix<T> head_;  ///< d x vocab

  // cache of the last recorded forward
  std::optional<TokenBatch> batch_;
  std::vector<BlockCache> cache_;
  Matrix<T> final_hidden_;
  Matrix<T> probs_out_;
  std::vector<Matrix<T>> proj_out_;
  std::vector<Matrix<T>> proj_grad_in_;
};

/// One optimizer step over the model's parameters with the given gradients.
template <typename T>
void optimizer_step(ToyModel<T>& model, const std::vector<Matrix<T>>& grads,
                    Optimizer<T>& opt);

struct FiniteDifferenceOptions {
  std::optional<std::string> parameter;  ///< restrict probes to one parameter name
  std::size_t probes = 32;
  double h = 1e-3;
  std::uint64_t seed = 7;
  /// Deviations are measured relative to max(|fd|, |tape|, abs_floor).
  double abs_floor = 1e-6;
};

struct FiniteDifferenceResult {
  double max_relative_deviation = 0.0;
  std::size_t probes = 0;
};

/// Central differences against the tape gradient at random coordinates.
/// The model must have PAMM disabled.
template <typename T>
FiniteDifferenceResult finite_difference_check(ToyModel<T>& model, const TokenBatch& batch,
                                               const FiniteDifferenceOptions& opts = {});

}  // namespace pamm
