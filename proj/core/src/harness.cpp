#include "pamm/harness.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <chrono>
#include <cmath>
#include <ostream>
#include <random>
#include <tuple>

#include "pamm/bounds.hpp"
#include "pamm/error.hpp"
#include "pamm/io.hpp"
#include "pamm/linalg.hpp"
#include "pamm/random.hpp"

namespace pamm {
namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point since) {
  return std::chrono::duration<double, std::milli>(Clock::now() - since).count();
}

}  // namespace

template <typename T>
Matrix<T> generate_clustered_data(std::size_t b, std::size_t n, std::size_t clusters,
                                  double spread, std::uint64_t seed) {
  if (clusters == 0 || clusters > b) {
    throw ArgumentError("generate_clustered_data: need 1 <= clusters <= b");
  }
  if (n == 0) throw ArgumentError("generate_clustered_data: n must be positive");
  if (spread < 0.0) throw ArgumentError("generate_clustered_data: spread must be >= 0");

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::uniform_int_distribution<int> exponent(-2, 2);
  std::bernoulli_distribution flip(0.5);

  Matrix<T> centers(clusters, n);
  for (std::size_t c = 0; c < clusters; ++c) {
    std::vector<double> u(n);
    double s = 0.0;
    for (double& x : u) {
      x = normal(rng);
      s += x * x;
    }
    s = std::sqrt(s);
    for (std::size_t j = 0; j < n; ++j) centers(c, j) = static_cast<T>(u[j] / s);
  }

  const double noise = spread / std::sqrt(static_cast<double>(n));
  Matrix<T> a(b, n);
  for (std::size_t i = 0; i < b; ++i) {
    const auto center = centers.row(i % clusters);
    const T mag = static_cast<T>(std::ldexp(flip(rng) ? -1.0 : 1.0, exponent(rng)));
    auto row = a.row(i);
    for (std::size_t j = 0; j < n; ++j) {
      T v = center[j];
      if (spread > 0.0) v = static_cast<T>(v + noise * normal(rng));
      row[j] = mag * v;
    }
  }
  return a;
}

template Matrix<float> generate_clustered_data<float>(std::size_t, std::size_t, std::size_t,
                                                      double, std::uint64_t);
template Matrix<double> generate_clustered_data<double>(std::size_t, std::size_t, std::size_t,
                                                        double, std::uint64_t);

std::string to_string(Method m) {
  switch (m) {
    case Method::pamm: return "pamm";
    case Method::uniform_crs: return "uniform_crs";
    case Method::gaussian_sketch: return "gaussian_sketch";
    case Method::exact: return "exact";
  }
  return "?";
}

std::string to_string(DataSource d) {
  switch (d) {
    case DataSource::synthetic_gaussian: return "synthetic-gaussian";
    case DataSource::synthetic_clustered: return "synthetic-clustered";
    case DataSource::matrix_file: return "matrix-file";
  }
  return "?";
}

Method parse_method(const std::string& s) {
  for (Method m : {Method::pamm, Method::uniform_crs, Method::gaussian_sketch, Method::exact}) {
    if (to_string(m) == s) return m;
  }
  throw ArgumentError("unknown method '" + s + "'");
}

DataSource parse_data_source(const std::string& s) {
  for (DataSource d : {DataSource::synthetic_gaussian, DataSource::synthetic_clustered,
                       DataSource::matrix_file}) {
    if (to_string(d) == s) return d;
  }
  throw ArgumentError("unknown data source '" + s + "'");
}

void ExperimentSpec::validate() const {
  if (ratios.empty()) throw ArgumentError("sweep: r grid is empty");
  if (epsilons.empty()) throw ArgumentError("sweep: epsilon grid is empty");
  if (trials < 1) throw ArgumentError("sweep: trials must be >= 1");
  for (double r : ratios) {
    if (!(r > 0.0 && r <= 1.0)) throw ArgumentError("sweep: r must lie in (0, 1]");
  }
  for (double e : epsilons) {
    if (std::isnan(e) || e < 0.0) throw ArgumentError("sweep: epsilon must be >= 0");
  }
  if (data_source != DataSource::matrix_file) {
    if (b == 0 || n == 0) throw ArgumentError("sweep: b and n must be positive");
    if (data_source == DataSource::synthetic_clustered && (clusters == 0 || clusters > b)) {
      throw ArgumentError("sweep: need 1 <= clusters <= b");
    }
  }
  if (m == 0) throw ArgumentError("sweep: m must be positive");
}

std::uint64_t sweep_trial_seed(std::uint64_t seed, std::size_t trial) {
  return derive_seed(seed, trial);
}

std::vector<std::size_t> sweep_generators(std::size_t b, double r, std::uint64_t trial_seed) {
  PammConfig cfg = PammConfig::with_ratio(r);
  cfg.seed = derive_seed(trial_seed, std::bit_cast<std::uint64_t>(r));
  return select_generators(b, cfg);
}

SweepInputs sweep_inputs(const ExperimentSpec& spec, std::uint64_t trial_seed) {
  SweepInputs in;
  switch (spec.data_source) {
    case DataSource::synthetic_gaussian:
      in.a = gaussian_matrix<float>(spec.b, spec.n, derive_seed(trial_seed, 0));
      break;
    case DataSource::synthetic_clustered:
      in.a = generate_clustered_data<float>(spec.b, spec.n, spec.clusters, spec.spread,
                                            derive_seed(trial_seed, 0));
      break;
    case DataSource::matrix_file:
      if (!std::filesystem::exists(spec.matrix_file)) {
        throw IoError("sweep: matrix file '" + spec.matrix_file.string() + "' not found");
      }
      in.a = io::load_matrix(spec.matrix_file);
      break;
  }
  in.b = gaussian_matrix<float>(in.a.rows(), spec.m, derive_seed(trial_seed, 1));
  return in;
}

std::vector<SweepResult> sweep_error_coverage(const ExperimentSpec& spec) {
  spec.validate();
  std::vector<SweepResult> rows;
  for (std::size_t trial = 0; trial < spec.trials; ++trial) {
    const std::uint64_t tseed = sweep_trial_seed(spec.seed, trial);
    const SweepInputs in = sweep_inputs(spec, tseed);
    const DenseMatrix64 exact = matmul_tn_f64(in.a, in.b);
    const std::size_t b = in.a.rows(), n = in.a.cols();

    for (double r : spec.ratios) {
      SweepResult base;
      base.method = spec.method;
      base.r = r;
      base.trial = trial;
      base.trial_seed = tseed;
      double current_eps = kNoTolerance;
      const auto where = [&] {
        return "sweep point (method=" + to_string(spec.method) + ", r=" + format_real(r) +
               ", epsilon=" + format_real(current_eps) + ", trial=" + std::to_string(trial) +
               "): ";
      };

      try {
        switch (spec.method) {
          case Method::exact: {
            const auto t0 = Clock::now();
            const DenseMatrix64 o = matmul_tn_f64(in.a, in.b);
            const double ms = elapsed_ms(t0);
            SweepResult row = base;
            row.relative_error = relative_error(exact, o);
            if (spec.record_timing) row.approx_ms = ms;
            rows.push_back(row);
            break;
          }
          case Method::gaussian_sketch: {
            const std::size_t ks = std::clamp<std::size_t>(
                static_cast<std::size_t>(std::ceil(r * static_cast<double>(n))), 1, n);
            const auto t0 = Clock::now();
            const SketchResult sk = gaussian_sketch_baseline(in.a, in.b, ks, derive_seed(tseed, 3));
            const double ms = elapsed_ms(t0);
            SweepResult row = base;
            row.relative_error = relative_error(exact, sk.approx);
            if (spec.record_timing) row.approx_ms = ms;
            rows.push_back(row);
            break;
          }
          case Method::pamm:
          case Method::uniform_crs: {
            const auto gens = sweep_generators(b, r, tseed);
            const std::vector<double> grid =
                spec.method == Method::uniform_crs ? std::vector<double>{0.0} : spec.epsilons;
            for (double eps : grid) {
              current_eps = eps;
              PammConfig cfg;
              cfg.epsilon = eps;
              cfg.seed = tseed;
              const auto t0 = Clock::now();
              const auto comp = compress_with_generators(in.a, gens, cfg);
              const double cms = elapsed_ms(t0);
              const auto t1 = Clock::now();
              const DenseMatrix o = approx_matmul(comp, in.b);
              const double ams = elapsed_ms(t1);
  
              SweepResult row = base;
              row.epsilon = eps;
              row.relative_error = relative_error(exact, o);
              row.coverage = comp.coverage();
              row.eta = comp.eta;
              if (!std::isinf(eps)) {
                auto unscaled = comp;
                unscaled.beta = 1.0;
                row.bound_rhs = error_bound_rhs(in.a, unscaled, in.b);
              }
              if (spec.record_timing) {
                row.compress_ms = cms;
                row.approx_ms = ams;
              }
              rows.push_back(row);
            }
            break;
          }
        }
      } catch (const UndefinedMetricError& e) {
        throw UndefinedMetricError(where() + e.what());
      } catch (const NumericError& e) {
        throw NumericError(where() + e.what());
      }
    }
  }
  std::stable_sort(rows.begin(), rows.end(), [](const SweepResult& x, const SweepResult& y) {
    return std::make_tuple(to_string(x.method), x.r, x.epsilon, x.trial) <
           std::make_tuple(to_string(y.method), y.r, y.epsilon, y.trial);
  });
  return rows;
}

SketchResult gaussian_sketch_baseline(const DenseMatrix& a, const DenseMatrix& b, std::size_t k,
                                      std::uint64_t seed, bool orthogonal) {
  const std::size_t n = a.cols();
  if (k == 0 || k > n) {
    throw ArgumentError("gaussian_sketch_baseline: need 1 <= k <= n (k=" + std::to_string(k) +
                        ", n=" + std::to_string(n) + ")");
  }
  if (a.rows() != b.rows()) throw ShapeError("gaussian_sketch_baseline: row count mismatch");

  DenseMatrix64 p = gaussian_matrix<double>(n, k, seed, 1.0 / std::sqrt(static_cast<double>(k)));
  if (orthogonal) {
    // modified Gram-Schmidt on the columns, then scale so that P P^T = (n/k) * projector
    for (std::size_t c = 0; c < k; ++c) {
      for (std::size_t prev = 0; prev < c; ++prev) {
        double d = 0.0;
        for (std::size_t r = 0; r < n; ++r) d += p(r, c) * p(r, prev);
        for (std::size_t r = 0; r < n; ++r) p(r, c) -= d * p(r, prev);
      }
      double s = 0.0;
      for (std::size_t r = 0; r < n; ++r) s += p(r, c) * p(r, c);
      s = std::sqrt(s);
      for (std::size_t r = 0; r < n; ++r) p(r, c) /= s;
    }
    const double scale = std::sqrt(static_cast<double>(n) / static_cast<double>(k));
    for (double& v : p.data()) v *= scale;
  }

  const DenseMatrix pf = p.cast<float>();
  const DenseMatrix sketch = matmul(a, pf);          // b x k, the stored tensor
  const DenseMatrix inner = matmul_tn(sketch, b);    // k x m
  SketchResult res;
  res.approx = matmul(pf, inner);                    // n x m
  res.stored_scalars = sketch.size();
  return res;
}

KBoundResult kbound_monte_carlo(const DenseMatrix& a, double epsilon, double delta,
                                std::size_t trials, std::uint64_t seed) {
  if (std::isinf(epsilon) || std::isnan(epsilon) || epsilon < 0.0) {
    throw ArgumentError("kbound_monte_carlo: epsilon must be finite and >= 0");
  }
  if (trials < 100) throw ArgumentError("kbound_monte_carlo: trials must be >= 100");

  KBoundResult res;
  res.b = a.rows();
  res.n = a.cols();
  res.epsilon = epsilon;
  res.delta = delta;
  res.trials = trials;
  res.n_min = epsilon_neighborhood_sizes(a, epsilon).n_min;
  res.k = k_bound(res.b, res.n_min, delta);
  if (res.k >= res.b) {
    res.k = res.b;
    res.clamped = true;
    return res;
  }
  PammConfig cfg = PammConfig::with_k(res.k, epsilon);
  for (std::size_t t = 0; t < trials; ++t) {
    cfg.seed = derive_seed(seed, t);
    const auto comp = compress(a, cfg);
    if (comp.eta > 0) ++res.failures;
  }
  return res;
}

UnbiasednessResult estimator_unbiasedness_mc(const DenseMatrix& a, const DenseMatrix& b,
                                             double keep_prob, std::size_t trials,
                                             std::uint64_t seed) {
  if (!(keep_prob > 0.0 && keep_prob <= 1.0)) {
    throw ArgumentError("estimator_unbiasedness_mc: keep_prob must lie in (0, 1]");
  }
  if (trials == 0) throw ArgumentError("estimator_unbiasedness_mc: trials must be >= 1");
  if (a.rows() != b.rows()) throw ShapeError("estimator_unbiasedness_mc: row count mismatch");

  const std::size_t rows = a.rows();
  const double beta = 1.0 / keep_prob;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);

  // The mean of beta * sum_i M_i A_i^T B_i over trials equals
  // sum_i (beta * count_i / trials) A_i^T B_i.
  std::vector<std::size_t> counts(rows, 0);
  std::vector<double> first(rows, 0.0);
  for (std::size_t t = 0; t < trials; ++t) {
    for (std::size_t i = 0; i < rows; ++i) {
      const bool keep = keep_prob >= 1.0 || u(rng) < keep_prob;
      if (keep) ++counts[i];
      if (t == 0) first[i] = keep ? beta : 0.0;
    }
  }
  auto weighted = [&](const std::vector<double>& w) {
    DenseMatrix64 aw = a.cast<double>();
    for (std::size_t i = 0; i < rows; ++i)
      for (double& v : aw.row(i)) v *= w[i];
    return matmul_tn(aw, b.cast<double>());
  };
  std::vector<double> mean_w(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    mean_w[i] = beta * static_cast<double>(counts[i]) / static_cast<double>(trials);
  }
  const DenseMatrix64 exact = matmul_tn_f64(a, b);
  UnbiasednessResult res;
  res.mean_deviation = relative_error(exact, weighted(mean_w));
  res.single_trial_deviation = relative_error(exact, weighted(first));
  return res;
}

// ---------------------------------------------------------------------------

template <typename T>
T toy_attention_step(ToyModel<T>& model, const TokenBatch& batch, Optimizer<T>& opt,
                     std::size_t step) {
  const T loss = model.forward(batch);
  if (!std::isfinite(static_cast<double>(loss))) {
    throw NumericError("non-finite loss at step " + std::to_string(step));
  }
  const auto grads = model.backward();
  optimizer_step(model, grads, opt);
  return loss;
}

template float toy_attention_step<float>(ToyModel<float>&, const TokenBatch&, Optimizer<float>&,
                                         std::size_t);
template double toy_attention_step<double>(ToyModel<double>&, const TokenBatch&,
                                           Optimizer<double>&, std::size_t);

void TrainingConfig::validate() const {
  if (batch == 0 || steps == 0) throw ArgumentError("train: batch and steps must be positive");
  if (ratio.has_value() == k.has_value()) {
    throw ArgumentError("train: set exactly one of ratio and k");
  }
  if (seeds.empty()) throw ArgumentError("train: no seeds");
  if (std::isnan(epsilon) || epsilon < 0.0) throw ArgumentError("train: epsilon must be >= 0");
  if (!(optimizer.base_lr > 0.0)) throw ArgumentError("train: learning rate must be positive");
  PammConfig probe;
  probe.ratio = ratio;
  probe.k = k;
  probe.effective_k(batch * model.seq_len);
}

double TrainingReport::mean_final_loss(const std::string& method) const {
  double s = 0.0;
  std::size_t c = 0;
  for (const auto& r : runs) {
    if (r.method == method && !r.diverged) {
      s += r.final_loss;
      ++c;
    }
  }
  return c ? s / static_cast<double>(c) : std::nan("");
}

TrainingRun train_toy(const TrainingConfig& cfg, std::uint64_t seed, bool use_pamm,
                      std::vector<TrainingRow>* rows) {
  cfg.validate();
  ToyModelConfig mc = cfg.model;
  mc.init_seed = seed;
  mc.pamm.reset();
  mc.pamm_lr_scale = cfg.pamm_lr_scale;
  if (use_pamm) {
    PammConfig p;
    p.ratio = cfg.ratio;
    p.k = cfg.k;
    p.epsilon = cfg.epsilon;
    p.seed = derive_seed(seed, 0xA11CE);
    mc.pamm = p;
  }
  ToyModel<float> model(mc);
  Optimizer<float> opt(cfg.optimizer);

  TrainingRun run;
  run.method = use_pamm ? "pamm" : "baseline";
  run.seed = seed;
  try {
    for (std::size_t step = 0; step < cfg.steps; ++step) {
      const TokenBatch batch =
          make_batch(cfg.task, cfg.batch, mc.seq_len, mc.vocab, derive_seed(seed, 1000 + step));
      const double loss = toy_attention_step(model, batch, opt, step);
      if (rows) rows->push_back({run.method, seed, step, loss});
    }
    const TokenBatch eval =
        make_batch(cfg.task, cfg.eval_batch, mc.seq_len, mc.vocab, derive_seed(seed, 999));
    run.final_loss = model.loss(eval);
    if (!std::isfinite(run.final_loss)) throw NumericError("non-finite evaluation loss");
  } catch (const NumericError& e) {
    run.diverged = true;
    run.failure = e.what();
    run.final_loss = std::nan("");
  }
  return run;
}

TrainingReport train_toy_comparison(const TrainingConfig& cfg) {
  cfg.validate();
  TrainingReport rep;
  for (std::uint64_t seed : cfg.seeds) {
    rep.runs.push_back(train_toy(cfg, seed, false, &rep.rows));
    rep.runs.push_back(train_toy(cfg, seed, true, &rep.rows));
  }
  return rep;
}

// ---------------------------------------------------------------------------

std::string format_real(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_real(const std::string& s) {
  if (s == "inf" || s == "INF" || s == "Inf" || s == "infinity") return kNoTolerance;
  double v = 0.0;
  const char* b = s.data();
  const char* e = s.data() + s.size();
  auto res = std::from_chars(b, e, v);
  if (res.ec != std::errc() || res.ptr != e) throw ArgumentError("cannot parse number '" + s + "'");
  return v;
}

void write_sweep_csv(std::ostream& os, const std::vector<SweepResult>& rows) {
  os << kSweepCsvHeader << '\n';
  for (const auto& r : rows) {
    os << to_string(r.method) << ',' << format_real(r.r) << ',' << format_real(r.epsilon) << ','
       << r.trial << ',' << format_real(r.relative_error) << ',' << format_real(r.coverage) << ','
       << r.eta << ',' << (r.bound_rhs ? format_real(*r.bound_rhs) : "") << ','
       << format_real(r.compress_ms) << ',' << format_real(r.approx_ms) << '\n';
  }
}

void write_training_csv(std::ostream& os, const std::vector<TrainingRow>& rows) {
  os << kTrainingCsvHeader << '\n';
  for (const auto& r : rows) {
    os << r.method << ',' << r.seed << ',' << r.step << ',' << format_real(r.loss) << '\n';
  }
}

void write_kbound_csv(std::ostream& os, const std::vector<KBoundResult>& rows) {
  os << kKBoundCsvHeader << '\n';
  for (const auto& r : rows) {
    os << r.b << ',' << r.n << ',' << format_real(r.epsilon) << ',' << format_real(r.delta) << ','
       << r.n_min << ',' << r.k << ',' << r.failures << ',' << r.trials << '\n';
  }
}

}  // namespace pamm
