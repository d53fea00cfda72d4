#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "pamm/layers.hpp"
#include "pamm/matrix.hpp"
#include "pamm/model.hpp"
#include "pamm/pamm.hpp"

namespace pamm {

// ---------------------------------------------------------------------------
// Synthetic data

/// Rows are s * m * (u_c + spread * g / sqrt(n)) with u_c a random unit
/// center, m a random power of two in [1/4, 4], s a random sign and g
/// standard normal. Rows are dealt to clusters round-robin, so cluster
/// sizes differ by at most one. With spread == 0 rows of one cluster are
/// exactly collinear in floating point.
template <typename T>
Matrix<T> generate_clustered_data(std::size_t b, std::size_t n, std::size_t clusters,
                                  double spread, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Error / coverage sweeps

enum class Method { pamm, uniform_crs, gaussian_sketch, exact };
enum class DataSource { synthetic_gaussian, synthetic_clustered, matrix_file };

std::string to_string(Method m);
std::string to_string(DataSource d);
/// Throws ArgumentError for unknown names.
Method parse_method(const std::string& s);
DataSource parse_data_source(const std::string& s);

struct ExperimentSpec {
  Method method = Method::pamm;
  std::size_t b = 256;
  std::size_t n = 16;
  std::size_t m = 8;
  std::vector<double> ratios{1.0 / 16};
  std::vector<double> epsilons{kNoTolerance};
  std::size_t trials = 1;
  std::uint64_t seed = 0;
  DataSource data_source = DataSource::synthetic_clustered;
  std::size_t clusters = 8;
  double spread = 0.1;
  std::filesystem::path matrix_file;  ///< A for DataSource::matrix_file
  bool record_timing = false;         ///< when false, timing columns are 0

  /// Throws ArgumentError describing the first invalid field.
  void validate() const;
};

struct SweepResult {
  Method method = Method::pamm;
  double r = 0.0;
  double epsilon = kNoTolerance;
  std::size_t trial = 0;
  std::uint64_t trial_seed = 0;
  double relative_error = 0.0;
  double coverage = 1.0;
  std::size_t eta = 0;
  std::optional<double> bound_rhs;
  double compress_ms = 0.0;
  double approx_ms = 0.0;
};

/// One row per (r, epsilon, trial). For a given (trial, r) every epsilon
/// reuses the same generator rows. Rows come back sorted by
/// (method, r, epsilon, trial).
std::vector<SweepResult> sweep_error_coverage(const ExperimentSpec& spec);

/// Generator draw shared by every method at (trial seed, r).
std::vector<std::size_t> sweep_generators(std::size_t b, double r, std::uint64_t trial_seed);

/// The (A, B) pair a sweep uses for a trial.
struct SweepInputs {
  DenseMatrix a;
  DenseMatrix b;
};
SweepInputs sweep_inputs(const ExperimentSpec& spec, std::uint64_t trial_seed);
std::uint64_t sweep_trial_seed(std::uint64_t seed, std::size_t trial);

// ---------------------------------------------------------------------------
// Baselines and Monte-Carlo checks

struct SketchResult {
  DenseMatrix approx;
  std::size_t stored_scalars = 0;
};

/// Hidden-dimension sketch: stores A P (b x k) with P (n x k), E[P P^T] = I,
/// and returns P (A P)^T B. With `orthogonal`, P has orthonormal columns
/// scaled by sqrt(n / k).
SketchResult gaussian_sketch_baseline(const DenseMatrix& a, const DenseMatrix& b, std::size_t k,
                                      std::uint64_t seed, bool orthogonal = false);

struct KBoundResult {
  std::size_t b = 0;
  std::size_t n = 0;
  double epsilon = 0.0;
  double delta = 0.0;
  std::size_t n_min = 0;
  std::size_t k = 0;
  bool clamped = false;  ///< k_bound >= b, full sample used
  std::size_t failures = 0;
  std::size_t trials = 0;
  double failure_rate() const { return trials ? static_cast<double>(failures) / trials : 0.0; }
};

/// Draws `trials` generator sets of size k_bound(b, n_min, delta) and counts
/// draws that leave some row outside its tolerance.
KBoundResult kbound_monte_carlo(const DenseMatrix& a, double epsilon, double delta,
                                std::size_t trials, std::uint64_t seed);

struct UnbiasednessResult {
  double mean_deviation = 0.0;          ///< ||mean - A^T B||_F / ||A^T B||_F
  double single_trial_deviation = 0.0;  ///< same for the first trial alone
};

/// Averages (1/keep_prob) sum_i M_i A_i^T B_i over Bernoulli keep masks.
UnbiasednessResult estimator_unbiasedness_mc(const DenseMatrix& a, const DenseMatrix& b,
                                             double keep_prob, std::size_t trials,
                                             std::uint64_t seed);

// ---------------------------------------------------------------------------
// Toy training

/// Forward, backward and optimizer update. Throws NumericError naming the
/// step when the loss is not finite.
template <typename T>
T toy_attention_step(ToyModel<T>& model, const TokenBatch& batch, Optimizer<T>& opt,
                     std::size_t step);

struct TrainingConfig {
  ToyModelConfig model;  ///< model.pamm is ignored; set ratio/k below
  std::size_t batch = 16;
  std::size_t steps = 500;
  OptimizerConfig optimizer;
  std::optional<double> ratio = 1.0 / 8;
  std::optional<std::size_t> k;
  double epsilon = kNoTolerance;
  double pamm_lr_scale = kPammLrScale;
  std::vector<std::uint64_t> seeds{1, 2, 3};
  ToyTask task = ToyTask::copy_previous;
  std::size_t eval_batch = 64;

  void validate() const;
};

struct TrainingRow {
  std::string method;
  std::uint64_t seed = 0;
  std::size_t step = 0;
  double loss = 0.0;
};

struct TrainingRun {
  std::string method;
  std::uint64_t seed = 0;
  bool diverged = false;
  std::string failure;
  double final_loss = 0.0;  ///< held-out loss after the last step
};

struct TrainingReport {
  std::vector<TrainingRow> rows;
  std::vector<TrainingRun> runs;

  /// Mean final loss over the non-diverged runs of `method`.
  double mean_final_loss(const std::string& method) const;
};

/// Trains the toy model with a single method for one seed.
TrainingRun train_toy(const TrainingConfig& cfg, std::uint64_t seed, bool use_pamm,
                      std::vector<TrainingRow>* rows = nullptr);

/// Baseline and PAMM runs for every seed on identical data order.
TrainingReport train_toy_comparison(const TrainingConfig& cfg);

// ---------------------------------------------------------------------------
// CSV output

inline constexpr const char* kSweepCsvHeader =
    "method,r,epsilon,trial,rel_error,coverage,eta,bound_rhs,compress_ms,approx_ms";
inline constexpr const char* kTrainingCsvHeader = "method,seed,step,loss";
inline constexpr const char* kKBoundCsvHeader = "b,n,epsilon,delta,n_min,k,failures,trials";

/// Shortest round-trip decimal; infinity is written as `inf`.
std::string format_real(double v);
/// Accepts decimal text or `inf`.
double parse_real(const std::string& s);

void write_sweep_csv(std::ostream& os, const std::vector<SweepResult>& rows);
void write_training_csv(std::ostream& os, const std::vector<TrainingRow>& rows);
void write_kbound_csv(std::ostream& os, const std::vector<KBoundResult>& rows);

}  // namespace pamm
