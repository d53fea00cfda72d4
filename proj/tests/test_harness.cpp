#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <limits>
#include <map>
#include <sstream>

#include "oracles.hpp"
#include "pamm/bounds.hpp"
#include "pamm/error.hpp"
#include "pamm/harness.hpp"
#include "pamm/io.hpp"
#include "pamm/linalg.hpp"
#include "pamm/random.hpp"

using namespace pamm;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

ExperimentSpec small_spec(Method m) {
  ExperimentSpec s;
  s.method = m;
  s.b = 96;
  s.n = 8;
  s.m = 4;
  s.ratios = {0.0625, 0.25};
  s.epsilons = {0.0, 0.2, 1.0, kInf};
  s.trials = 3;
  s.seed = 5;
  return s;
}

}  // namespace

TEST(ClusteredData, ZeroSpreadRowsAreCollinear) {
  const auto a = generate_clustered_data<float>(40, 6, 5, 0.0, 3);
  const auto sizes = epsilon_neighborhood_sizes(a, 0.0);
  EXPECT_EQ(sizes.n_min, 8u);
  for (auto s : sizes.sizes) EXPECT_EQ(s, 8u);
  EXPECT_EQ(epsilon_neighborhood_sizes(a, 0.3).n_min, 8u);
}

TEST(ClusteredData, SingleClusterIsRankOne) {
  const auto a = generate_clustered_data<float>(50, 5, 1, 0.0, 4);
  const auto comp = compress(a, PammConfig::with_k(1, kInf, 1));
  EXPECT_EQ(comp.eta, 0u);
  EXPECT_LE(relative_error(a, reconstruct(comp)), 1e-5);
}

TEST(ClusteredData, NeighborhoodsReflectClusterSize) {
  const auto a = generate_clustered_data<float>(1024, 16, 8, 0.1, 5);
  EXPECT_GE(epsilon_neighborhood_sizes(a, 0.3).n_min, 64u);
}

TEST(ClusteredData, Errors) {
  EXPECT_THROW(generate_clustered_data<float>(4, 2, 0, 0.1, 1), ArgumentError);
  EXPECT_THROW(generate_clustered_data<float>(4, 2, 5, 0.1, 1), ArgumentError);
  EXPECT_THROW(generate_clustered_data<float>(4, 2, 2, -0.1, 1), ArgumentError);
  EXPECT_EQ(generate_clustered_data<float>(30, 3, 3, 0.2, 9),
            generate_clustered_data<float>(30, 3, 3, 0.2, 9));
}

TEST(Sweep, ExactMethodHasZeroError) {
  for (const auto& row : sweep_error_coverage(small_spec(Method::exact))) {
    EXPECT_EQ(row.relative_error, 0.0);
    EXPECT_EQ(row.epsilon, kInf);
  }
}

TEST(Sweep, CoverageNonDecreasingInEpsilon) {
  const auto rows = sweep_error_coverage(small_spec(Method::pamm));
  ASSERT_EQ(rows.size(), 2u * 4 * 3);
  std::map<std::pair<double, std::size_t>, std::vector<double>> cov;
  for (const auto& r : rows) cov[{r.r, r.trial}].push_back(r.coverage);  // eps ascending
  for (const auto& [key, c] : cov) {
    ASSERT_EQ(c.size(), 4u);
    for (std::size_t i = 1; i < c.size(); ++i) EXPECT_LE(c[i - 1], c[i]);
  }
}

TEST(Sweep, BoundHoldsAndIsMissingAtInfinity) {
  for (const auto& r : sweep_error_coverage(small_spec(Method::pamm))) {
    EXPECT_EQ(r.bound_rhs.has_value(), !std::isinf(r.epsilon));
    EXPECT_EQ(r.compress_ms, 0.0);
    EXPECT_EQ(r.approx_ms, 0.0);
  }
}

TEST(Sweep, UniformCrsEqualsZeroTolerancePamm) {
  const auto crs = sweep_error_coverage(small_spec(Method::uniform_crs));
  const auto pamm = sweep_error_coverage(small_spec(Method::pamm));
  std::size_t matched = 0;
  for (const auto& c : crs) {
    EXPECT_EQ(c.epsilon, 0.0);
    for (const auto& p : pamm) {
      if (p.epsilon == 0.0 && p.r == c.r && p.trial == c.trial) {
        EXPECT_EQ(p.relative_error, c.relative_error);
        EXPECT_EQ(p.coverage, c.coverage);
        EXPECT_EQ(p.eta, c.eta);
        ++matched;
      }
    }
  }
  EXPECT_EQ(matched, crs.size());
}

TEST(Sweep, ReproducibleAndSorted) {
  const auto spec = small_spec(Method::pamm);
  std::ostringstream x, y;
  write_sweep_csv(x, sweep_error_coverage(spec));
  write_sweep_csv(y, sweep_error_coverage(spec));
  EXPECT_EQ(x.str(), y.str());
  EXPECT_EQ(x.str().substr(0, x.str().find('\n')), kSweepCsvHeader);
  EXPECT_NE(x.str().find(",inf,"), std::string::npos);
}

TEST(Sweep, GaussianSketchRows) {
  auto spec = small_spec(Method::gaussian_sketch);
  spec.ratios = {1.0};
  const auto rows = sweep_error_coverage(spec);
  ASSERT_EQ(rows.size(), 3u);
  for (const auto& r : rows) EXPECT_GT(r.relative_error, 0.0);
}

TEST(Sweep, MatrixFileSource) {
  const auto path = std::filesystem::temp_directory_path() / "pamm_harness_a.csv";
  io::save_matrix(path, oracle::random_matrix(20, 3, 1));
  ExperimentSpec spec;
  spec.data_source = DataSource::matrix_file;
  spec.matrix_file = path;
  spec.ratios = {0.5};
  const auto rows = sweep_error_coverage(spec);
  ASSERT_EQ(rows.size(), 1u);
  spec.matrix_file = "/nonexistent/a.csv";
  EXPECT_THROW(sweep_error_coverage(spec), IoError);
}

TEST(Sweep, InvalidSpecs) {
  auto s = small_spec(Method::pamm);
  s.ratios = {};
  EXPECT_THROW(s.validate(), ArgumentError);
  s = small_spec(Method::pamm);
  s.ratios = {1.5};
  EXPECT_THROW(s.validate(), ArgumentError);
  s = small_spec(Method::pamm);
  s.epsilons = {-1};
  EXPECT_THROW(s.validate(), ArgumentError);
  EXPECT_THROW(parse_method("bogus"), ArgumentError);
  EXPECT_EQ(parse_method("uniform_crs"), Method::uniform_crs);
  EXPECT_EQ(parse_data_source(to_string(DataSource::synthetic_gaussian)),
            DataSource::synthetic_gaussian);
}

TEST(Sketch, OrthogonalSquareIsLossless) {
  const auto a = oracle::random_matrix(30, 6, 1);
  const auto b = oracle::random_matrix(30, 4, 2);
  const auto r = gaussian_sketch_baseline(a, b, 6, 3, true);
  EXPECT_LE(oracle::rel_frob(oracle::matmul_tn(a, b), r.approx), 1e-4);
  EXPECT_EQ(r.stored_scalars, 30u * 6);
}

TEST(Sketch, UnbiasedOnAverage) {
  const auto a = oracle::random_matrix(16, 6, 4);
  const auto b = oracle::random_matrix(16, 3, 5);
  const auto exact = oracle::matmul_tn(a, b);
  oracle::Mat mean(6, std::vector<double>(3, 0.0));
  const int draws = 10000;
  for (int t = 0; t < draws; ++t) {
    const auto r = gaussian_sketch_baseline(a, b, 2, derive_seed(77, t));
    for (std::size_t i = 0; i < 6; ++i)
      for (std::size_t j = 0; j < 3; ++j) mean[i][j] += r.approx(i, j) / draws;
  }
  double d = 0.0;
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 3; ++j) d += std::pow(mean[i][j] - exact[i][j], 2);
  EXPECT_LT(std::sqrt(d) / oracle::frob(exact), 0.02);
}

TEST(Sketch, DeterministicAndValidated) {
  const auto a = oracle::random_matrix(10, 4, 6);
  const auto b = oracle::random_matrix(10, 2, 7);
  EXPECT_EQ(gaussian_sketch_baseline(a, b, 2, 9).approx, gaussian_sketch_baseline(a, b, 2, 9).approx);
  EXPECT_THROW(gaussian_sketch_baseline(a, b, 5, 9), ArgumentError);
  EXPECT_THROW(gaussian_sketch_baseline(a, b, 0, 9), ArgumentError);
}

TEST(KBoundMc, CollinearData) {
  const auto a = generate_clustered_data<float>(64, 4, 1, 0.0, 1);
  const auto r = kbound_monte_carlo(a, 0.3, 0.05, 100, 2);
  EXPECT_EQ(r.n_min, 64u);
  EXPECT_EQ(r.failures, 0u);
  EXPECT_EQ(r.k, k_bound(64, 64, 0.05));
  EXPECT_FALSE(r.clamped);
}

TEST(KBoundMc, OrthogonalRowsClamp) {
  const auto r = kbound_monte_carlo(DenseMatrix::identity(8), 0.5, 0.05, 100, 3);
  EXPECT_EQ(r.n_min, 1u);
  EXPECT_TRUE(r.clamped);
  EXPECT_EQ(r.k, 8u);
  EXPECT_EQ(r.failure_rate(), 0.0);
}

TEST(KBoundMc, Errors) {
  const auto a = DenseMatrix::identity(4);
  EXPECT_THROW(kbound_monte_carlo(a, kInf, 0.05, 100, 1), ArgumentError);
  EXPECT_THROW(kbound_monte_carlo(a, 0.3, 0.05, 99, 1), ArgumentError);
  EXPECT_THROW(kbound_monte_carlo(a, 0.3, 1.5, 100, 1), ArgumentError);
}

TEST(Unbiasedness, KeepAllIsExact) {
  const auto a = oracle::random_matrix(32, 4, 1);
  const auto b = oracle::random_matrix(32, 3, 2);
  const auto r = estimator_unbiasedness_mc(a, b, 1.0, 50, 3);
  EXPECT_LT(r.mean_deviation, 1e-6);
  EXPECT_LT(r.single_trial_deviation, 1e-6);
  EXPECT_THROW(estimator_unbiasedness_mc(a, b, 0.0, 5, 1), ArgumentError);
}

TEST(Unbiasedness, AveragingShrinksDeviation) {
  const auto a = oracle::random_matrix(64, 8, 4);
  const auto b = oracle::random_matrix(64, 4, 5);
  const auto r = estimator_unbiasedness_mc(a, b, 0.5, 2000, 6);
  EXPECT_GT(r.single_trial_deviation, 5 * r.mean_deviation);
}

TEST(Training, ComparisonProducesRowsForBothMethods) {
  TrainingConfig cfg;
  cfg.model.d_model = 8;
  cfg.batch = 4;
  cfg.steps = 5;
  cfg.seeds = {1, 2};
  const auto rep = train_toy_comparison(cfg);
  EXPECT_EQ(rep.rows.size(), 2u * 2 * 5);
  ASSERT_EQ(rep.runs.size(), 4u);
  for (const auto& r : rep.runs) {
    EXPECT_FALSE(r.diverged);
    EXPECT_TRUE(std::isfinite(r.final_loss));
  }
  std::ostringstream os;
  write_training_csv(os, rep.rows);
  EXPECT_EQ(os.str().substr(0, os.str().find('\n')), kTrainingCsvHeader);
}

TEST(Training, DivergenceIsRecordedNotThrown) {
  TrainingConfig cfg;
  cfg.model.d_model = 8;
  cfg.batch = 4;
  cfg.steps = 30;
  cfg.seeds = {1};
  cfg.optimizer.kind = OptimizerKind::sgd;
  cfg.optimizer.base_lr = 1e30;
  const auto rep = train_toy_comparison(cfg);
  bool any = false;
  for (const auto& r : rep.runs) {
    if (r.diverged) {
      any = true;
      EXPECT_NE(r.failure.find("step"), std::string::npos);
    }
  }
  EXPECT_TRUE(any);
}

TEST(Training, LrScaleVariantsBothComplete) {
  TrainingConfig cfg;
  cfg.model.d_model = 8;
  cfg.batch = 8;
  cfg.steps = 40;
  cfg.seeds = {3};
  for (double s : {0.25, 1.0}) {
    cfg.pamm_lr_scale = s;
    const auto run = train_toy(cfg, 3, true);
    EXPECT_FALSE(run.diverged) << s;
  }
}

TEST(Training, InvalidConfig) {
  TrainingConfig cfg;
  cfg.k = 4;
  EXPECT_THROW(cfg.validate(), ArgumentError);
  cfg = TrainingConfig{};
  cfg.ratio = 2.0;
  EXPECT_THROW(cfg.validate(), ArgumentError);
}

TEST(Csv, RealFormatting) {
  EXPECT_EQ(format_real(kInf), "inf");
  EXPECT_EQ(parse_real("inf"), kInf);
  EXPECT_EQ(parse_real(format_real(0.1)), 0.1);
  EXPECT_EQ(format_real(0.25), "0.25");
  EXPECT_THROW(parse_real("x"), ArgumentError);
  std::ostringstream os;
  KBoundResult k;
  k.b = 10;
  write_kbound_csv(os, {k});
  EXPECT_EQ(os.str().substr(0, os.str().find('\n')), kKBoundCsvHeader);
}
