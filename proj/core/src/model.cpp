#include "pamm/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "pamm/error.hpp"
#include "pamm/linalg.hpp"
#include "pamm/random.hpp"

namespace pamm {

TokenBatch make_batch(ToyTask task, std::size_t batch, std::size_t seq_len, std::size_t vocab,
                      std::uint64_t seed) {
  if (batch == 0 || seq_len == 0 || vocab == 0) throw ArgumentError("make_batch: empty shape");
  TokenBatch tb{batch, seq_len, std::vector<std::uint32_t>(batch * seq_len),
                std::vector<std::uint32_t>(batch * seq_len)};
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::uint32_t> tok(0, static_cast<std::uint32_t>(vocab - 1));
  for (auto& t : tb.tokens) t = tok(rng);
  for (std::size_t s = 0; s < batch; ++s) {
    const std::size_t base = s * seq_len;
    for (std::size_t t = 0; t < seq_len; ++t) {
      switch (task) {
        case ToyTask::copy_previous:
          tb.targets[base + t] = t == 0 ? tok(rng) : tb.tokens[base + t - 1];
          break;
        case ToyTask::reverse:
          tb.targets[base + t] = tb.tokens[base + seq_len - 1 - t];
          break;
      }
    }
  }
  return tb;
}

namespace {

template <typename T>
Matrix<T> init_matrix(std::size_t r, std::size_t c, std::uint64_t seed, double stddev) {
  return gaussian_matrix<T>(r, c, seed, stddev);
}

template <typename T>
void add_inplace(Matrix<T>& a, const Matrix<T>& b) {
  auto ad = a.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < ad.size(); ++i) ad[i] += bd[i];
}

/// Rows [first, first + count) of m.
template <typename T>
Matrix<T> slice_rows(const Matrix<T>& m, std::size_t first, std::size_t count) {
  Matrix<T> out(count, m.cols());
  std::copy(m.row(first).begin(), m.row(first).begin() + count * m.cols(), out.data().begin());
  return out;
}

template <typename T>
void put_rows(Matrix<T>& dst, std::size_t first, const Matrix<T>& src) {
  std::copy(src.data().begin(), src.data().end(), dst.row(first).begin());
}

/// Row softmax with causal mask (entry j > i excluded).
template <typename T>
Matrix<T> causal_softmax(const Matrix<T>& scores) {
  Matrix<T> p(scores.rows(), scores.cols());
  for (std::size_t i = 0; i < scores.rows(); ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j <= i; ++j) mx = std::max(mx, static_cast<double>(scores(i, j)));
    double sum = 0.0;
    std::vector<double> e(i + 1);
    for (std::size_t j = 0; j <= i; ++j) {
      e[j] = std::exp(static_cast<double>(scores(i, j)) - mx);
      sum += e[j];
    }
    for (std::size_t j = 0; j <= i; ++j) p(i, j) = static_cast<T>(e[j] / sum);
  }
  return p;
}

}  // namespace

template <typename T>
ToyModel<T>::ToyModel(const ToyModelConfig& cfg) : cfg_(cfg) {
  if (cfg.vocab == 0 || cfg.seq_len == 0 || cfg.d_model == 0) {
    throw ArgumentError("ToyModel: vocab, seq_len and d_model must be positive");
  }
  const std::size_t d = cfg.d_model;
  const double wstd = 1.0 / std::sqrt(static_cast<double>(d));
  std::uint64_t stream = 0;
  auto next_seed = [&] { return derive_seed(cfg.init_seed, stream++); };

  embed_ = init_matrix<T>(cfg.vocab, d, next_seed(), 1.0);
  pos_ = init_matrix<T>(cfg.seq_len, d, next_seed(), 1.0);
  for (std::size_t l = 0; l < cfg.blocks; ++l) {
    auto layer = [&](std::size_t which) {
      std::optional<PammConfig> p = cfg.pamm;
      if (p) p->seed = derive_seed(p->seed, 3 * l + which);
      return PammLinearLayer<T>(init_matrix<T>(d, d, next_seed(), wstd), p,
                                cfg.pamm ? cfg.pamm_lr_scale : 1.0);
    };
    auto wq = layer(0);
    auto wk = layer(1);
    auto wv = layer(2);
    blocks_.push_back(AttentionBlock<T>{std::move(wq), std::move(wk), std::move(wv),
                                        init_matrix<T>(d, d, next_seed(), wstd)});
  }
  head_ = cfg.zero_head ? Matrix<T>(d, cfg.vocab) : init_matrix<T>(d, cfg.vocab, next_seed(), wstd);
}

template <typename T>
Matrix<T> ToyModel<T>::embed_rows(const TokenBatch& batch) const {
  if (batch.seq_len != cfg_.seq_len) throw ShapeError("ToyModel: sequence length mismatch");
  const std::size_t d = cfg_.d_model;
  Matrix<T> x(batch.rows(), d);
  for (std::size_t r = 0; r < batch.rows(); ++r) {
    const std::uint32_t tok = batch.tokens[r];
    if (tok >= cfg_.vocab) throw ArgumentError("ToyModel: token index out of range");
    auto e = embed_.row(tok);
    auto p = pos_.row(r % batch.seq_len);
    auto dst = x.row(r);
    for (std::size_t c = 0; c < d; ++c) dst[c] = e[c] + p[c];
  }
  return x;
}

template <typename T>
double ToyModel<T>::forward_impl(const TokenBatch& batch, bool record) {
  const std::size_t L = batch.seq_len, d = cfg_.d_model;
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  Matrix<T> h = embed_rows(batch);

  if (record) {
    cache_.clear();
    proj_out_.clear();
  }
  for (auto& blk : blocks_) {
    BlockCache bc;
    if (record) {
      bc.q = blk.wq.forward(h);
      bc.k = blk.wk.forward(h);
      bc.v = blk.wv.forward(h);
      proj_out_.push_back(bc.q);
      proj_out_.push_back(bc.k);
      proj_out_.push_back(bc.v);
    } else {
      bc.q = matmul(h, blk.wq.weight());
      bc.k = matmul(h, blk.wk.weight());
      bc.v = matmul(h, blk.wv.weight());
    }
    bc.attn = Matrix<T>(h.rows(), d);
    for (std::size_t s = 0; s < batch.batch; ++s) {
      const auto qs = slice_rows(bc.q, s * L, L);
      const auto ks = slice_rows(bc.k, s * L, L);
      const auto vs = slice_rows(bc.v, s * L, L);
      Matrix<T> scores = matmul_nt(qs, ks);
      for (T& x : scores.data()) x = static_cast<T>(x * scale);
      Matrix<T> p = causal_softmax(scores);
      put_rows(bc.attn, s * L, matmul(p, vs));
      if (record) bc.probs.push_back(std::move(p));
    }
    add_inplace(h, matmul(bc.attn, blk.wo));
    if (record) cache_.push_back(std::move(bc));
  }

  const Matrix<T> logits = matmul(h, head_);
  Matrix<T> probs(logits.rows(), logits.cols());
  double total = 0.0;
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    const std::uint32_t y = batch.targets[r];
    if (y >= cfg_.vocab) throw ArgumentError("ToyModel: target index out of range");
    double mx = -std::numeric_limits<double>::infinity();
    for (T v : logits.row(r)) mx = std::max(mx, static_cast<double>(v));
    double sum = 0.0;
    for (T v : logits.row(r)) sum += std::exp(static_cast<double>(v) - mx);
    const double lse = mx + std::log(sum);
    total += lse - static_cast<double>(logits(r, y));
    for (std::size_t c = 0; c < logits.cols(); ++c) {
      probs(r, c) = static_cast<T>(std::exp(static_cast<double>(logits(r, c)) - lse));
    }
  }
  const double loss = total / static_cast<double>(logits.rows());
  if (record) {
    batch_ = batch;
    final_hidden_ = std::move(h);
    probs_out_ = std::move(probs);
  }
  return loss;
}

template <typename T>
T ToyModel<T>::forward(const TokenBatch& batch) {
  return static_cast<T>(forward_impl(batch, true));
}

template <typename T>
double ToyModel<T>::loss(const TokenBatch& batch) {
  return forward_impl(batch, false);
}

template <typename T>
std::vector<ParamRef<T>> ToyModel<T>::parameters() {
  std::vector<ParamRef<T>> ps;
  ps.push_back({"embedding", &embed_, 1.0});
  ps.push_back({"position", &pos_, 1.0});
  for (std::size_t l = 0; l < blocks_.size(); ++l) {
    auto& blk = blocks_[l];
    const std::string p = "block" + std::to_string(l) + ".";
    ps.push_back({p + "wq", &blk.wq.weight(), blk.wq.lr_scale()});
    ps.push_back({p + "wk", &blk.wk.weight(), blk.wk.lr_scale()});
    ps.push_back({p + "wv", &blk.wv.weight(), blk.wv.lr_scale()});
    ps.push_back({p + "wo", &blk.wo, 1.0});
  }
  ps.push_back({"head", &head_, 1.0});
  return ps;
}

template <typename T>
std::vector<Matrix<T>> ToyModel<T>::backward() {
  if (!batch_) throw StateError("ToyModel::backward called without a recorded forward");
  const TokenBatch& batch = *batch_;
  const std::size_t L = batch.seq_len, d = cfg_.d_model, rows = batch.rows();
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));

  // dlogits = (softmax - onehot) / rows
  Matrix<T> dlogits = probs_out_;
  for (std::size_t r = 0; r < rows; ++r) {
    dlogits(r, batch.targets[r]) -= T(1);
  }
  for (T& v : dlogits.data()) v = static_cast<T>(v / static_cast<double>(rows));

  Matrix<T> dhead = matmul_tn(final_hidden_, dlogits);
  Matrix<T> dh = matmul_nt(dlogits, head_);

  std::vector<Matrix<T>> block_grads(4 * blocks_.size());
  proj_grad_in_.assign(3 * blocks_.size(), Matrix<T>());
  for (std::size_t li = blocks_.size(); li-- > 0;) {
    auto& blk = blocks_[li];
    BlockCache& bc = cache_[li];
    // h_out = h_in + attn W_o
    block_grads[4 * li + 3] = matmul_tn(bc.attn, dh);
    const Matrix<T> dattn = matmul_nt(dh, blk.wo);

    Matrix<T> dq(rows, d), dk(rows, d), dv(rows, d);
    for (std::size_t s = 0; s < batch.batch; ++s) {
      const Matrix<T>& p = bc.probs[s];
      const auto qs = slice_rows(bc.q, s * L, L);
      const auto ks = slice_rows(bc.k, s * L, L);
      const auto vs = slice_rows(bc.v, s * L, L);
      const auto dos = slice_rows(dattn, s * L, L);
      put_rows(dv, s * L, matmul_tn(p, dos));
      Matrix<T> dp = matmul_nt(dos, vs);
      Matrix<T> ds(L, L);
      for (std::size_t i = 0; i < L; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j <= i; ++j) dot += static_cast<double>(dp(i, j)) * p(i, j);
        for (std::size_t j = 0; j <= i; ++j) {
          ds(i, j) = static_cast<T>(p(i, j) * (dp(i, j) - dot) * scale);
        }
      }
      put_rows(dq, s * L, matmul(ds, ks));
      put_rows(dk, s * L, matmul_tn(ds, qs));
    }

    auto gq = blk.wq.backward(dq);
    auto gk = blk.wk.backward(dk);
    auto gv = blk.wv.backward(dv);
    block_grads[4 * li + 0] = std::move(gq.grad_weight);
    block_grads[4 * li + 1] = std::move(gk.grad_weight);
    block_grads[4 * li + 2] = std::move(gv.grad_weight);
    add_inplace(dh, gq.grad_input);
    add_inplace(dh, gk.grad_input);
    add_inplace(dh, gv.grad_input);
    proj_grad_in_[3 * li + 0] = std::move(gq.grad_input);
    proj_grad_in_[3 * li + 1] = std::move(gk.grad_input);
    proj_grad_in_[3 * li + 2] = std::move(gv.grad_input);
  }

  Matrix<T> dembed(cfg_.vocab, d), dpos(cfg_.seq_len, d);
  for (std::size_t r = 0; r < rows; ++r) {
    auto src = dh.row(r);
    auto de = dembed.row(batch.tokens[r]);
    auto dp = dpos.row(r % L);
    for (std::size_t c = 0; c < d; ++c) {
      de[c] += src[c];
      dp[c] += src[c];
    }
  }

  std::vector<Matrix<T>> grads;
  grads.push_back(std::move(dembed));
  grads.push_back(std::move(dpos));
  for (auto& g : block_grads) grads.push_back(std::move(g));
  grads.push_back(std::move(dhead));
  batch_.reset();
  cache_.clear();
  return grads;
}

template <typename T>
void optimizer_step(ToyModel<T>& model, const std::vector<Matrix<T>>& grads, Optimizer<T>& opt) {
  auto params = model.parameters();
  if (params.size() != grads.size()) throw ShapeError("optimizer_step: gradient count mismatch");
  opt.begin_step();
  for (std::size_t i = 0; i < params.size(); ++i) {
    opt.update(i, *params[i].value, grads[i], params[i].lr_scale);
  }
}

template <typename T>
FiniteDifferenceResult finite_difference_check(ToyModel<T>& model, const TokenBatch& batch,
                                               const FiniteDifferenceOptions& opts) {
  if (model.config().pamm) {
    throw ArgumentError("finite_difference_check: PAMM must be disabled");
  }
  model.forward(batch);
  const auto grads = model.backward();
  auto params = model.parameters();

  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!opts.parameter || params[i].name == *opts.parameter) candidates.push_back(i);
  }
  if (candidates.empty()) throw ArgumentError("finite_difference_check: unknown parameter");

  std::mt19937_64 rng(opts.seed);
  FiniteDifferenceResult res;
  for (std::size_t probe = 0; probe < opts.probes; ++probe) {
    const std::size_t pi = candidates[std::uniform_int_distribution<std::size_t>(
        0, candidates.size() - 1)(rng)];
    Matrix<T>& p = *params[pi].value;
    const std::size_t idx = std::uniform_int_distribution<std::size_t>(0, p.size() - 1)(rng);
    const T orig = p.data()[idx];
    // divide by the step actually stored, which differs from 2h after rounding
    const T hi = static_cast<T>(orig + opts.h);
    const T lo = static_cast<T>(orig - opts.h);
    p.data()[idx] = hi;
    const double up = model.loss(batch);
    p.data()[idx] = lo;
    const double down = model.loss(batch);
    p.data()[idx] = orig;
    const double fd = (up - down) / (static_cast<double>(hi) - static_cast<double>(lo));
    const double tape = grads[pi].data()[idx];
    const double denom = std::max({std::abs(fd), std::abs(tape), opts.abs_floor});
    res.max_relative_deviation = std::max(res.max_relative_deviation, std::abs(fd - tape) / denom);
    ++res.probes;
  }
  return res;
}

template class ToyModel<float>;
template class ToyModel<double>;
template void optimizer_step<float>(ToyModel<float>&, const std::vector<Matrix<float>>&,
                                    Optimizer<float>&);
template void optimizer_step<double>(ToyModel<double>&, const std::vector<Matrix<double>>&,
                                     Optimizer<double>&);
template FiniteDifferenceResult finite_difference_check<float>(ToyModel<float>&, const TokenBatch&,
                                                               const FiniteDifferenceOptions&);
template FiniteDifferenceResult finite_difference_check<double>(ToyModel<double>&,
                                                                const TokenBatch&,
                                                                const FiniteDifferenceOptions&);

}  // namespace pamm
