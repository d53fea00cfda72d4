#include "cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "pamm/bounds.hpp"
#include "pamm/error.hpp"
#include "pamm/harness.hpp"
#include "pamm/io.hpp"
#include "pamm/linalg.hpp"
#include "pamm/pamm.hpp"
#include "pamm/random.hpp"

namespace pamm::cli {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

constexpr const char* kOutDirEnv = "PAMM_OUT_DIR";

/// Usage problems detected after CLI11 parsing.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double parse_epsilon(const std::string& s) {
  double v = 0.0;
  try {
    v = parse_real(s);
  } catch (const ArgumentError&) {
    throw UsageError("invalid epsilon '" + s + "' (use a number >= 0 or 'inf')");
  }
  if (std::isnan(v) || v < 0.0) throw UsageError("epsilon must be >= 0 or 'inf'");
  return v;
}

std::vector<double> parse_grid(const std::string& s, const char* what) {
  std::vector<double> out;
  for (const auto& item : split_list(s)) {
    try {
      out.push_back(parse_real(item));
    } catch (const ArgumentError&) {
      throw UsageError(std::string("invalid ") + what + " grid entry '" + item + "'");
    }
  }
  if (out.empty()) throw UsageError(std::string(what) + " grid is empty");
  return out;
}

std::string format_beta(const std::optional<double>& beta) {
  return beta ? format_real(*beta) : "undefined";
}

/// Shared state of one invocation: output directory and manifest.
class Session {
 public:
  Session(std::string subcommand, std::vector<std::string> argv, fs::path out_dir, fs::path in_dir)
      : subcommand_(std::move(subcommand)), argv_(std::move(argv)), out_dir_(std::move(out_dir)),
        in_dir_(std::move(in_dir)), start_(Clock::now()) {}

  /// Output paths are relative to the output directory.
  fs::path resolve(const std::string& p) const {
    fs::path path(p);
    if (path.is_absolute() || out_dir_.empty()) return path;
    return out_dir_ / path;
  }
  /// Input paths are relative to the invocation's working directory.
  fs::path input(const std::string& p) const {
    fs::path path(p);
    if (path.is_absolute() || in_dir_.empty()) return path;
    return in_dir_ / path;
  }

  void record_flag(const std::string& name, const json& value) { flags_[name] = value; }
  void record_seed(const std::string& name, std::uint64_t seed) { seeds_[name] = seed; }

  void write_text(const fs::path& path, const std::string& text) {
    io::write_file_atomic(path, text);
    outputs_.push_back(path.string());
  }
  void note_output(const fs::path& path) { outputs_.push_back(path.string()); }

  /// Writes `<primary>.manifest.json` beside the primary output.
  void write_manifest(const fs::path& primary) const {
    json m;
    m["tool"] = "pamm";
    m["version"] = kVersion;
    m["subcommand"] = subcommand_;
    m["argv"] = argv_;
    m["out_dir"] = out_dir_.string();
    m["cwd"] = in_dir_.string();
    m["flags"] = flags_;
    m["seeds"] = seeds_;
    m["outputs"] = outputs_;
    m["sampler"] = std::string(SeededSampler::kAlgorithm);
    m["wall_time_ms"] =
        std::chrono::duration<double, std::milli>(Clock::now() - start_).count();
    fs::path mp = primary;
    mp += ".manifest.json";
    io::write_file_atomic(mp, m.dump(2) + "\n");
  }

 private:
  std::string subcommand_;
  std::vector<std::string> argv_;
  fs::path out_dir_;
  fs::path in_dir_;
  Clock::time_point start_;
  json flags_ = json::object();
  json seeds_ = json::object();
  std::vector<std::string> outputs_;
};

void record_options(Session& s, const CLI::App* sub) {
  for (const CLI::Option* opt : sub->get_options()) {
    if (opt->get_name() == "--help" || opt->count() == 0) continue;
    const auto& res = opt->results();
    std::string name = opt->get_name();
    name.erase(0, name.find_first_not_of('-'));
    if (res.size() == 1) s.record_flag(name, res.front());
    else if (res.empty()) s.record_flag(name, true);
    else s.record_flag(name, res);
  }
}

// --- subcommand bodies ------------------------------------------------------

struct CompressArgs {
  std::string input, output, epsilon = "inf";
  std::optional<double> ratio;
  std::optional<std::size_t> k;
  std::uint64_t seed = 0;
  double norm_guard = kDefaultNormGuard;
};

int cmd_compress(const CompressArgs& a, Session& s, std::ostream& out) {
  if (a.ratio.has_value() == a.k.has_value()) {
    throw UsageError("compress: pass exactly one of --ratio and --k");
  }
  PammConfig cfg;
  cfg.ratio = a.ratio;
  cfg.k = a.k;
  cfg.epsilon = parse_epsilon(a.epsilon);
  cfg.seed = a.seed;
  cfg.norm_guard = a.norm_guard;
  s.record_seed("sampler", a.seed);

  const DenseMatrix m = io::load_matrix(s.input(a.input));
  const auto comp = compress(m, cfg);
  const fs::path dst = s.resolve(a.output);
  io::save_compressed(dst, comp);
  s.note_output(dst);
  s.write_manifest(dst);

  const Footprint fp = memory_footprint(comp);
  out << "b=" << comp.b << " n=" << comp.n << " k=" << comp.k << " eta=" << comp.eta
      << " beta=" << format_beta(comp.beta) << " footprint_ratio=" << format_real(fp.ratio)
      << '\n';
  return kOk;
}

struct ApproxArgs {
  std::string compressed, b_matrix, output, exact_check;
};

int cmd_approx(const ApproxArgs& a, Session& s, std::ostream& out) {
  const auto comp = io::load_compressed(s.input(a.compressed));
  const DenseMatrix b = io::load_matrix(s.input(a.b_matrix));
  if (b.rows() != comp.b) {
    throw ShapeError("approx: B has " + std::to_string(b.rows()) +
                     " rows, compressed input has " + std::to_string(comp.b));
  }
  const DenseMatrix o = approx_matmul(comp, b);
  const fs::path dst = s.resolve(a.output);
  io::save_matrix(dst, o);
  s.note_output(dst);

  if (!a.exact_check.empty()) {
    const DenseMatrix orig = io::load_matrix(s.input(a.exact_check));
    if (orig.rows() != comp.b || orig.cols() != comp.n) {
      throw ShapeError("approx: --exact-check matrix does not match the compressed shape");
    }
    const DenseMatrix64 exact = matmul_tn_f64(orig, b);
    out << "relative_error=" << format_real(relative_error(exact, o));
    if (!std::isinf(comp.epsilon)) {
      auto unscaled = comp;
      unscaled.beta = 1.0;
      out << " bound_rhs=" << format_real(error_bound_rhs(orig, unscaled, b));
    }
    out << '\n';
  }
  s.write_manifest(dst);
  out << "wrote " << dst.string() << " (" << o.rows() << "x" << o.cols() << ")\n";
  return kOk;
}

struct SweepArgs {
  std::string methods = "pamm", ratios = "0.0625", epsilons = "inf", data = "synthetic-clustered";
  std::string matrix_file, output = "sweep.csv";
  std::size_t b = 256, n = 16, m = 8, trials = 1, clusters = 8;
  double spread = 0.1;
  std::uint64_t seed = 0;
  bool timing = false;
};

int cmd_sweep(const SweepArgs& a, Session& s, std::ostream& out) {
  ExperimentSpec spec;
  spec.b = a.b;
  spec.n = a.n;
  spec.m = a.m;
  spec.trials = a.trials;
  spec.seed = a.seed;
  spec.clusters = a.clusters;
  spec.spread = a.spread;
  spec.record_timing = a.timing;
  spec.ratios = parse_grid(a.ratios, "r");
  spec.epsilons = parse_grid(a.epsilons, "epsilon");
  try {
    spec.data_source = parse_data_source(a.data);
  } catch (const ArgumentError& e) {
    throw UsageError(e.what());
  }
  if (spec.data_source == DataSource::matrix_file) {
    if (a.matrix_file.empty()) throw UsageError("sweep: --data matrix-file needs --matrix-file");
    spec.matrix_file = s.input(a.matrix_file);
  }
  std::vector<Method> methods;
  for (const auto& name : split_list(a.methods)) {
    try {
      methods.push_back(parse_method(name));
    } catch (const ArgumentError& e) {
      throw UsageError(e.what());
    }
  }
  if (methods.empty()) throw UsageError("sweep: no methods given");
  try {
    spec.validate();
  } catch (const ArgumentError& e) {
    throw UsageError(e.what());
  }
  s.record_seed("sweep", a.seed);

  std::vector<SweepResult> rows;
  for (Method m : methods) {
    spec.method = m;
    auto part = sweep_error_coverage(spec);
    rows.insert(rows.end(), part.begin(), part.end());
  }
  std::stable_sort(rows.begin(), rows.end(), [](const SweepResult& x, const SweepResult& y) {
    return std::make_tuple(to_string(x.method), x.r, x.epsilon, x.trial) <
           std::make_tuple(to_string(y.method), y.r, y.epsilon, y.trial);
  });
  std::ostringstream csv;
  write_sweep_csv(csv, rows);
  const fs::path dst = s.resolve(a.output);
  s.write_text(dst, csv.str());
  s.write_manifest(dst);
  out << "wrote " << rows.size() << " rows to " << dst.string() << '\n';
  return kOk;
}

struct KBoundArgs {
  std::string input, epsilon = "0.3", output = "kbound.csv";
  std::size_t b = 1024, n = 16, clusters = 8, trials = 1000;
  double spread = 0.05, delta = 0.05;
  std::uint64_t seed = 0, data_seed = 0;
};

int cmd_kbound(const KBoundArgs& a, Session& s, std::ostream& out) {
  const double eps = parse_epsilon(a.epsilon);
  if (std::isinf(eps)) throw UsageError("kbound: epsilon must be finite");
  if (!(a.delta > 0.0 && a.delta < 1.0)) throw UsageError("kbound: delta must lie in (0, 1)");
  if (a.trials < 100) throw UsageError("kbound: --trials must be >= 100");
  DenseMatrix m;
  if (!a.input.empty()) {
    m = io::load_matrix(s.input(a.input));
  } else {
    if (a.clusters == 0 || a.clusters > a.b) throw UsageError("kbound: need 1 <= clusters <= b");
    m = generate_clustered_data<float>(a.b, a.n, a.clusters, a.spread, a.data_seed);
    s.record_seed("data", a.data_seed);
  }
  s.record_seed("sampler", a.seed);
  const KBoundResult r = kbound_monte_carlo(m, eps, a.delta, a.trials, a.seed);
  std::ostringstream csv;
  write_kbound_csv(csv, {r});
  const fs::path dst = s.resolve(a.output);
  s.write_text(dst, csv.str());
  s.write_manifest(dst);
  out << "n_min=" << r.n_min << " k=" << r.k << (r.clamped ? " (clamped to b)" : "")
      << " failures=" << r.failures << "/" << r.trials
      << " failure_rate=" << format_real(r.failure_rate()) << '\n';
  return kOk;
}

struct UnbiasArgs {
  std::size_t b = 64, n = 8, m = 4, trials = 10000;
  double keep_prob = 0.5;
  std::uint64_t seed = 0;
  std::string output = "unbias.csv";
};

int cmd_unbias(const UnbiasArgs& a, Session& s, std::ostream& out) {
  if (!(a.keep_prob > 0.0 && a.keep_prob <= 1.0)) {
    throw UsageError("unbias: --keep-prob must lie in (0, 1]");
  }
  if (a.trials == 0 || a.b == 0 || a.n == 0 || a.m == 0) {
    throw UsageError("unbias: sizes and trials must be positive");
  }
  s.record_seed("unbias", a.seed);
  const DenseMatrix am = gaussian_matrix<float>(a.b, a.n, derive_seed(a.seed, 0));
  const DenseMatrix bm = gaussian_matrix<float>(a.b, a.m, derive_seed(a.seed, 1));
  const auto r = estimator_unbiasedness_mc(am, bm, a.keep_prob, a.trials, derive_seed(a.seed, 2));
  std::ostringstream csv;
  csv << "b,n,m,keep_prob,trials,mean_deviation,single_trial_deviation\n"
      << a.b << ',' << a.n << ',' << a.m << ',' << format_real(a.keep_prob) << ',' << a.trials
      << ',' << format_real(r.mean_deviation) << ',' << format_real(r.single_trial_deviation)
      << '\n';
  const fs::path dst = s.resolve(a.output);
  s.write_text(dst, csv.str());
  s.write_manifest(dst);
  out << "mean_deviation=" << format_real(r.mean_deviation)
      << " single_trial_deviation=" << format_real(r.single_trial_deviation) << '\n';
  return kOk;
}

struct TrainArgs {
  std::size_t vocab = 16, seq_len = 8, d_model = 32, blocks = 1, batch = 16, steps = 500;
  double lr = 1e-2, lr_scale = kPammLrScale;
  std::string optimizer = "adam", task = "copy_previous", epsilon = "inf", seeds = "1,2,3";
  std::optional<double> ratio;
  std::optional<std::size_t> k;
  std::string output = "train.csv";
};

int cmd_train(const TrainArgs& a, Session& s, std::ostream& out) {
  TrainingConfig cfg;
  cfg.model.vocab = a.vocab;
  cfg.model.seq_len = a.seq_len;
  cfg.model.d_model = a.d_model;
  cfg.model.blocks = a.blocks;
  cfg.batch = a.batch;
  cfg.steps = a.steps;
  cfg.optimizer.base_lr = a.lr;
  if (a.optimizer == "adam") cfg.optimizer.kind = OptimizerKind::adam;
  else if (a.optimizer == "sgd") cfg.optimizer.kind = OptimizerKind::sgd;
  else throw UsageError("train: --optimizer must be adam or sgd");
  if (a.task == "copy_previous") cfg.task = ToyTask::copy_previous;
  else if (a.task == "reverse") cfg.task = ToyTask::reverse;
  else throw UsageError("train: --task must be copy_previous or reverse");
  if (a.ratio && a.k) throw UsageError("train: pass at most one of --ratio and --k");
  cfg.ratio = a.k ? std::nullopt : std::optional<double>(a.ratio.value_or(1.0 / 8));
  cfg.k = a.k;
  cfg.epsilon = parse_epsilon(a.epsilon);
  cfg.pamm_lr_scale = a.lr_scale;
  cfg.seeds.clear();
  for (const auto& item : split_list(a.seeds)) {
    try {
      cfg.seeds.push_back(std::stoull(item));
    } catch (const std::exception&) {
      throw UsageError("train: invalid seed '" + item + "'");
    }
  }
  try {
    cfg.validate();
  } catch (const ArgumentError& e) {
    throw UsageError(e.what());
  }
  for (auto seed : cfg.seeds) s.record_seed("train_" + std::to_string(seed), seed);

  const TrainingReport rep = train_toy_comparison(cfg);
  std::ostringstream csv;
  write_training_csv(csv, rep.rows);
  const fs::path dst = s.resolve(a.output);
  s.write_text(dst, csv.str());

  std::ostringstream summary;
  summary << "method,seed,final_loss,diverged\n";
  for (const auto& r : rep.runs) {
    summary << r.method << ',' << r.seed << ',' << format_real(r.final_loss) << ','
            << (r.diverged ? 1 : 0) << '\n';
    if (r.diverged) out << "run " << r.method << "/" << r.seed << " diverged: " << r.failure << '\n';
  }
  fs::path sp = dst;
  sp.replace_extension(".summary.csv");
  s.write_text(sp, summary.str());
  s.write_manifest(dst);
  out << "baseline mean final loss=" << format_real(rep.mean_final_loss("baseline"))
      << " pamm mean final loss=" << format_real(rep.mean_final_loss("pamm")) << '\n';
  return kOk;
}

struct BenchArgs {
  std::size_t b = 4096, n = 16, m = 512, k = 16, reps = 5;
  std::uint64_t seed = 0;
  std::string epsilon = "inf", output;
};

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

int cmd_bench(const BenchArgs& a, Session& s, std::ostream& out) {
  if (a.reps < 5) throw UsageError("bench: --reps must be >= 5");
  if (a.b == 0 || a.n == 0 || a.m == 0 || a.k == 0 || a.k > a.b) {
    throw UsageError("bench: need positive sizes and 1 <= k <= b");
  }
  const double eps = parse_epsilon(a.epsilon);
  s.record_seed("bench", a.seed);
  const DenseMatrix am = gaussian_matrix<float>(a.b, a.n, derive_seed(a.seed, 0));
  const DenseMatrix bm = gaussian_matrix<float>(a.b, a.m, derive_seed(a.seed, 1));

  std::vector<double> tc, ta, te;
  for (std::size_t r = 0; r < a.reps; ++r) {
    PammConfig cfg = PammConfig::with_k(a.k, eps, derive_seed(a.seed, 10 + r));
    auto t0 = Clock::now();
    const auto comp = compress(am, cfg);
    auto t1 = Clock::now();
    const DenseMatrix o = approx_matmul(comp, bm);
    auto t2 = Clock::now();
    const DenseMatrix e = matmul_tn(am, bm);
    auto t3 = Clock::now();
    tc.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    ta.push_back(std::chrono::duration<double, std::milli>(t2 - t1).count());
    te.push_back(std::chrono::duration<double, std::milli>(t3 - t2).count());
  }
  const double gamma = speedup_gamma(a.b, a.m, a.k);
  const Footprint fp = memory_footprint(a.b, a.n, a.k);
  out << std::fixed << std::setprecision(3) << "compress_ms_median=" << median(tc)
      << " approx_ms_median=" << median(ta) << " exact_ms_median=" << median(te) << '\n'
      << "theoretical_gamma=" << std::setprecision(2) << gamma << '\n'
      << "footprint compressed=" << fp.compressed_scalars << " dense=" << fp.dense_scalars
      << " ratio=" << std::setprecision(2) << fp.ratio << '\n';
  out.unsetf(std::ios::floatfield);

  if (!a.output.empty()) {
    std::ostringstream csv;
    csv << "b,n,m,k,reps,compress_ms,approx_ms,exact_ms,gamma,compressed_scalars,dense_scalars\n"
        << a.b << ',' << a.n << ',' << a.m << ',' << a.k << ',' << a.reps << ','
        << format_real(median(tc)) << ',' << format_real(median(ta)) << ','
        << format_real(median(te)) << ',' << format_real(gamma) << ',' << fp.compressed_scalars
        << ',' << fp.dense_scalars << '\n';
    const fs::path dst = s.resolve(a.output);
    s.write_text(dst, csv.str());
    s.write_manifest(dst);
  }
  return kOk;
}

int cmd_info(const std::string& input, Session& s, std::ostream& out) {
  out << "pamm " << kVersion << "\n"
      << "sampler: " << SeededSampler::kAlgorithm << "\n"
      << "matrix format: PAMM v" << io::kFormatVersion << " (binary) or CSV\n"
      << "compressed format: PAMC v" << io::kFormatVersion << "\n";
  if (input.empty()) return kOk;
  const fs::path p = s.input(input);
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot open " + p.string());
  char magic[4] = {};
  in.read(magic, 4);
  in.seekg(0);
  if (std::equal(magic, magic + 4, io::kCompressedMagic)) {
    const auto c = io::read_compressed(in);
    const Footprint fp = memory_footprint(c);
    out << p.string() << ": compressed activation b=" << c.b << " n=" << c.n << " k=" << c.k
        << " eta=" << c.eta << " epsilon=" << format_real(c.epsilon)
        << " beta=" << format_beta(c.beta) << " seed=" << c.seed
        << " footprint_ratio=" << format_real(fp.ratio) << '\n';
  } else {
    in.close();
    const DenseMatrix m = io::load_matrix(p);
    out << p.string() << ": matrix " << m.rows() << "x" << m.cols()
        << " frobenius=" << format_real(frobenius_norm(m)) << '\n';
  }
  return kOk;
}

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
             int depth, const fs::path& in_dir);

int replay(const std::string& manifest, std::ostream& out, std::ostream& err, int depth) {
  if (depth > 0) throw UsageError("replay: a manifest cannot trigger another replay");
  std::ifstream in(manifest);
  if (!in) throw IoError("cannot open manifest " + manifest);
  json m;
  try {
    in >> m;
  } catch (const json::exception& e) {
    throw IoError("manifest " + manifest + " is not valid JSON: " + e.what());
  }
  if (!m.contains("argv") || !m["argv"].is_array()) {
    throw IoError("manifest " + manifest + " has no argv");
  }
  const fs::path in_dir = m.contains("cwd") && m["cwd"].is_string()
                             ? fs::path(m["cwd"].get<std::string>())
                             : fs::current_path();
  return dispatch(m["argv"].get<std::vector<std::string>>(), out, err, depth + 1, in_dir);
}

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
             int depth, const fs::path& in_dir) {
  CLI::App app{"Point-approximate matrix multiplication: compression and experiments", "pamm"};
  app.require_subcommand(0, 1);
  std::string out_dir;
  if (const char* env = std::getenv(kOutDirEnv)) out_dir = env;
  app.add_option("--out-dir", out_dir,
                 std::string("Directory for relative output paths (default $") + kOutDirEnv + ")");
  std::string replay_path;
  app.add_option("--replay", replay_path, "Re-run the invocation recorded in a manifest");
  bool version = false;
  app.add_flag("--version", version, "Print the version");

  CompressArgs ca;
  auto* compress = app.add_subcommand("compress", "Compress a matrix into a PAMC file");
  compress->add_option("--input", ca.input, "Matrix file (PAMM binary or CSV)")->required();
  auto* ratio_opt = compress->add_option("--ratio", ca.ratio, "Generators per row, k = ceil(r*b)");
  auto* k_opt = compress->add_option("--k", ca.k, "Explicit generator count");
  ratio_opt->excludes(k_opt);
  compress->add_option("--epsilon", ca.epsilon, "Tolerance or 'inf'")->capture_default_str();
  compress->add_option("--seed", ca.seed, "Sampler seed")->capture_default_str();
  compress->add_option("--norm-guard", ca.norm_guard, "Near-zero norm threshold")
      ->capture_default_str();
  compress->add_option("--output", ca.output, "Output PAMC file")->required();

  ApproxArgs aa;
  auto* approx = app.add_subcommand("approx", "Approximate A^T B from a PAMC file");
  approx->add_option("--compressed", aa.compressed, "PAMC file")->required();
  approx->add_option("--b-matrix", aa.b_matrix, "B matrix file")->required();
  approx->add_option("--output", aa.output, "Product output (.csv or binary)")->required();
  approx->add_option("--exact-check", aa.exact_check,
                     "Original A; prints relative error and bound");

  SweepArgs sa;
  auto* sweep = app.add_subcommand("sweep", "Relative error / coverage sweep over (r, epsilon)");
  sweep->add_option("--method", sa.methods, "pamm,uniform_crs,gaussian_sketch,exact")
      ->capture_default_str();
  sweep->add_option("--b", sa.b)->capture_default_str();
  sweep->add_option("--n", sa.n)->capture_default_str();
  sweep->add_option("--m", sa.m)->capture_default_str();
  sweep->add_option("--ratios", sa.ratios, "Comma-separated r grid")->capture_default_str();
  sweep->add_option("--epsilons", sa.epsilons, "Comma-separated epsilon grid ('inf' allowed)")
      ->capture_default_str();
  sweep->add_option("--trials", sa.trials)->capture_default_str();
  sweep->add_option("--seed", sa.seed)->capture_default_str();
  sweep->add_option("--data", sa.data, "synthetic-gaussian|synthetic-clustered|matrix-file")
      ->capture_default_str();
  sweep->add_option("--matrix-file", sa.matrix_file);
  sweep->add_option("--clusters", sa.clusters)->capture_default_str();
  sweep->add_option("--spread", sa.spread)->capture_default_str();
  sweep->add_flag("--timing", sa.timing, "Record wall times (output no longer reproducible)");
  sweep->add_option("--output", sa.output)->capture_default_str();

  KBoundArgs ka;
  auto* kbound = app.add_subcommand("kbound", "Monte-Carlo check of the generator-count bound");
  kbound->add_option("--input", ka.input, "Matrix file (default: clustered synthetic data)");
  kbound->add_option("--b", ka.b)->capture_default_str();
  kbound->add_option("--n", ka.n)->capture_default_str();
  kbound->add_option("--clusters", ka.clusters)->capture_default_str();
  kbound->add_option("--spread", ka.spread)->capture_default_str();
  kbound->add_option("--data-seed", ka.data_seed)->capture_default_str();
  kbound->add_option("--epsilon", ka.epsilon)->capture_default_str();
  kbound->add_option("--delta", ka.delta)->capture_default_str();
  kbound->add_option("--trials", ka.trials)->capture_default_str();
  kbound->add_option("--seed", ka.seed)->capture_default_str();
  kbound->add_option("--output", ka.output)->capture_default_str();

  UnbiasArgs ua;
  auto* unbias = app.add_subcommand("unbias", "Monte-Carlo check of the dropped-row correction");
  unbias->add_option("--b", ua.b)->capture_default_str();
  unbias->add_option("--n", ua.n)->capture_default_str();
  unbias->add_option("--m", ua.m)->capture_default_str();
  unbias->add_option("--keep-prob", ua.keep_prob)->capture_default_str();
  unbias->add_option("--trials", ua.trials)->capture_default_str();
  unbias->add_option("--seed", ua.seed)->capture_default_str();
  unbias->add_option("--output", ua.output)->capture_default_str();

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Toy attention training, baseline vs PAMM");
  train->add_option("--vocab", ta.vocab)->capture_default_str();
  train->add_option("--seq-len", ta.seq_len)->capture_default_str();
  train->add_option("--d-model", ta.d_model)->capture_default_str();
  train->add_option("--blocks", ta.blocks)->capture_default_str();
  train->add_option("--batch", ta.batch)->capture_default_str();
  train->add_option("--steps", ta.steps)->capture_default_str();
  train->add_option("--lr", ta.lr)->capture_default_str();
  train->add_option("--lr-scale", ta.lr_scale, "Rate multiplier for PAMM layers")
      ->capture_default_str();
  train->add_option("--optimizer", ta.optimizer, "adam|sgd")->capture_default_str();
  train->add_option("--task", ta.task, "copy_previous|reverse")->capture_default_str();
  train->add_option("--ratio", ta.ratio, "PAMM ratio (default 1/8)");
  train->add_option("--k", ta.k, "Explicit generator count");
  train->add_option("--epsilon", ta.epsilon)->capture_default_str();
  train->add_option("--seeds", ta.seeds, "Comma-separated seeds")->capture_default_str();
  train->add_option("--output", ta.output)->capture_default_str();

  BenchArgs ba;
  auto* bench = app.add_subcommand("bench", "Time compress / approx / exact and report theory");
  bench->add_option("--b", ba.b)->capture_default_str();
  bench->add_option("--n", ba.n)->capture_default_str();
  bench->add_option("--m", ba.m)->capture_default_str();
  bench->add_option("--k", ba.k)->capture_default_str();
  bench->add_option("--reps", ba.reps)->capture_default_str();
  bench->add_option("--epsilon", ba.epsilon)->capture_default_str();
  bench->add_option("--seed", ba.seed)->capture_default_str();
  bench->add_option("--output", ba.output, "Optional CSV with the medians");

  std::string info_input;
  auto* info = app.add_subcommand("info", "Describe the tool or a PAMM/PAMC file");
  info->add_option("--input", info_input);

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "pamm: " << e.what() << '\n';
    return kUsage;
  }

  if (version) {
    out << "pamm " << kVersion << '\n';
    return kOk;
  }
  if (!replay_path.empty()) return replay(replay_path, out, err, depth);

  const auto subs = app.get_subcommands();
  if (subs.empty()) {
    err << app.help();
    return kUsage;
  }
  CLI::App* sub = subs.front();
  Session session(sub->get_name(), args, out_dir, in_dir);
  record_options(session, sub);

  if (sub == compress) return cmd_compress(ca, session, out);
  if (sub == approx) return cmd_approx(aa, session, out);
  if (sub == sweep) return cmd_sweep(sa, session, out);
  if (sub == kbound) return cmd_kbound(ka, session, out);
  if (sub == unbias) return cmd_unbias(ua, session, out);
  if (sub == train) return cmd_train(ta, session, out);
  if (sub == bench) return cmd_bench(ba, session, out);
  return cmd_info(info_input, session, out);
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  try {
    return dispatch(args, out, err, 0, fs::current_path());
  } catch (const UsageError& e) {
    err << "pamm: " << e.what() << '\n';
    return kUsage;
  } catch (const ArgumentError& e) {
    err << "pamm: " << e.what() << '\n';
    return kUsage;
  } catch (const IoError& e) {
    err << "pamm: " << e.what() << '\n';
    return kIoFailure;
  } catch (const ShapeError& e) {
    err << "pamm: " << e.what() << '\n';
    return kIoFailure;
  } catch (const std::exception& e) {
    err << "pamm: " << e.what() << '\n';
    return kNumericFailure;
  }
}

}  // namespace pamm::cli
