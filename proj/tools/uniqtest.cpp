// uniqtest: command-line front end for the bootstrap non-uniqueness test.
//
//   uniqtest test --kind circle --data data/turtles.csv --unit deg --out turtles.json
//   uniqtest simulate size --dim 1 --n 100 --trials 200 --B 2000 --out size
//   uniqtest verify quantile-sum --m 2 --alpha 0.05
//   uniqtest calibrate --n 10000
//
// Exit codes: 0 success, 1 verification failed, 2 bad input, 3 numeric failure.

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "uniqtest/asymptotics.hpp"
#include "uniqtest/circle_mean.hpp"
#include "uniqtest/curve_fit.hpp"
#include "uniqtest/dataset.hpp"
#include "uniqtest/errors.hpp"
#include "uniqtest/gmm.hpp"
#include "uniqtest/multiscale.hpp"
#include "uniqtest/sphere_mean.hpp"
#include "uniqtest/uniqueness_test.hpp"

namespace {

using namespace uniqtest;
using json = nlohmann::ordered_json;

constexpr int kExitFailed = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

std::string g_invocation;

std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  return buf;
}

/// Header common to every JSON output.  The timestamp lives only here.
json provenance(std::uint64_t seed) {
  json j;
  j["invocation"] = g_invocation;
  j["seed"] = seed;
  j["generated_at"] = utc_timestamp();
  return j;
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << text;
}

void write_json(const std::string& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct CommonFlags {
  std::uint64_t seed = 1;
  std::string out;
  std::string calibration_cache;
  unsigned threads = 0;
};

void add_common(CLI::App* app, CommonFlags& c) {
  app->add_option("--seed", c.seed, "Master seed");
  app->add_option("--out", c.out, "Output path ('-' or empty for stdout)");
  app->add_option("--calibration-cache", c.calibration_cache, "File memoizing detector calibrations");
  app->add_option("--threads", c.threads, "Worker threads (0: UNIQTEST_THREADS or all cores)");
}

// ---- test ----

struct TestFlags {
  CommonFlags common;
  std::string kind;
  std::string data;
  std::string unit = "rad";
  int gmm_k = 0;
  int gmm_starts = GmmConfig{}.starts;
  int curve_starts = CurveFitConfig{}.starts;
  bool constrain = false;
  std::size_t B = 10000;
  double alpha = 0.05;
  bool no_ell = false;
  bool no_d = false;
};

template <class P>
int finish_test(const P& problem, const TestFlags& f, bool ell_available) {
  CalibrationCache cache(f.common.calibration_cache);
  TestOptions opt;
  opt.B = f.B;
  opt.seed = f.common.seed;
  opt.alpha = f.alpha;
  opt.use_d = !f.no_d;
  opt.use_ell = !f.no_ell && ell_available;
  opt.cache = &cache;
  opt.threads = f.common.threads;
  const TestReport report = run_test(problem, opt);
  json j = provenance(f.common.seed);
  j["B"] = f.B;
  j["dataset"] = f.data;
  j["report"] = to_json(report);
  write_json(f.common.out, j);
  auto p = [](const std::optional<SummaryOutcome>& s) { return s ? fmt(s->p) : std::string("NA"); };
  std::fprintf(stderr, "p_d=%s p_ell=%s reject@%g=%s\n", p(report.d).c_str(), p(report.ell).c_str(), f.alpha,
               report.reject() ? "yes" : "no");
  return 0;
}

int cmd_test(const TestFlags& f) {
  if (f.kind == "circle") {
    if (f.unit != "rad" && f.unit != "deg") throw DataError("--unit must be rad or deg");
    // on the circle the ell summary coincides with d; both are reported
    return finish_test(CircleMeanProblem(load_circle(f.data, f.unit == "deg" ? AngleUnit::deg : AngleUnit::rad)),
                       f, true);
  }
  if (f.kind == "sphere") return finish_test(SphereMeanProblem(load_sphere(f.data)), f, true);
  if (f.kind == "curve") {
    CurveFitConfig cfg;
    cfg.constrain = f.constrain;
    cfg.starts = f.curve_starts;
    return finish_test(CurveFitProblem(load_curve(f.data), cfg), f, false);
  }
  if (f.kind == "euclidean") {
    if (f.gmm_k < 1) throw DataError("euclidean data needs --gmm-k >= 1");
    GmmConfig cfg;
    cfg.starts = f.gmm_starts;
    return finish_test(GmmProblem(load_euclidean(f.data), f.gmm_k, cfg), f, true);
  }
  throw DataError("unknown --kind '" + f.kind + "'");
}

// ---- simulate ----

struct SimulateFlags {
  CommonFlags common;
  int dim = 1;
  std::vector<std::size_t> n{100};
  std::vector<double> a{-0.1, -0.05, 0.0, 0.05, 0.1};
  std::size_t trials = 200;
  std::size_t B = 2000;
  double alpha = 0.05;
  double sd = std::numbers::pi / 50.0;
  std::vector<double> theta{0.0, 20.0, 5.0, 0.01};
  double t_max = 400.0;
  double t_step = 2.0;
  double noise = 0.1;
};

TestOptions sim_options(const SimulateFlags& f, CalibrationCache& cache) {
  if (f.trials < 1) throw DataError("--trials must be at least 1");
  TestOptions opt;
  opt.B = f.B;
  opt.seed = f.common.seed;
  opt.alpha = f.alpha;
  opt.cache = &cache;
  opt.threads = f.common.threads;
  return opt;
}

std::string csv_preamble() { return "# " + g_invocation + "\n"; }

std::string out_path(const std::string& prefix, const std::string& suffix) {
  if (prefix.empty() || prefix == "-") return prefix;
  return prefix + suffix;
}

int cmd_simulate_size(const SimulateFlags& f) {
  if (f.dim < 1) throw DataError("--dim must be at least 1");
  if (f.n.empty()) throw DataError("--n needs at least one sample size");
  CalibrationCache cache(f.common.calibration_cache);
  const TestOptions opt = sim_options(f, cache);
  const SimDistribution dist =
      f.dim == 1 ? SimDistribution(CircleNullMixture{0.0, f.sd}) : SimDistribution(SpherePoleNull{f.dim});
  for (std::size_t n : f.n) {
    if (n < 2) throw DataError("sample sizes must be at least 2");
    const SizeResult res = simulate_size(dist, n, f.trials, opt);
    std::ostringstream csv;
    csv << csv_preamble() << "# B=" << f.B << " seed=" << f.common.seed << " trials=" << f.trials << "\n";
    csv << "n,rank,uniform_quantile,p_d,p_ell\n";
    for (std::size_t i = 0; i < res.p_d.size(); ++i)
      csv << n << "," << i + 1 << "," << fmt((static_cast<double>(i) + 0.5) / static_cast<double>(res.p_d.size()))
          << "," << fmt(res.p_d[i]) << "," << (i < res.p_ell.size() ? fmt(res.p_ell[i]) : "") << "\n";
    write_text(out_path(f.common.out, "_n" + std::to_string(n) + ".csv"), csv.str());
    std::fprintf(stderr, "n=%zu rate_d=%g rate_ell=%g\n", n, res.rate_d, res.rate_ell);
  }
  return 0;
}

int cmd_simulate_power(const SimulateFlags& f) {
  CalibrationCache cache(f.common.calibration_cache);
  const TestOptions opt = sim_options(f, cache);
  for (std::size_t n : f.n)
    if (n < 2) throw DataError("sample sizes must be at least 2");
  const auto cells = simulate_power(f.a, f.n, f.trials, opt, f.sd);
  std::ostringstream csv;
  csv << csv_preamble() << "# B=" << f.B << " seed=" << f.common.seed << "\n";
  csv << "a,n,trials,rate,se\n";
  for (const auto& c : cells) {
    const double se = std::sqrt(c.rate_d * (1.0 - c.rate_d) / static_cast<double>(c.trials));
    csv << fmt(c.a) << "," << c.n << "," << c.trials << "," << fmt(c.rate_d) << "," << fmt(se) << "\n";
  }
  write_text(out_path(f.common.out, ".csv"), csv.str());
  return 0;
}

/// Synthetic growth-curve data from the curve-fit model family.
int cmd_simulate_curve(const SimulateFlags& f) {
  if (f.theta.size() != 4) throw DataError("--theta needs four values");
  if (!(f.t_step > 0.0) || !(f.t_max >= 0.0)) throw DataError("invalid time grid");
  const CurveParams truth{f.theta[0], f.theta[1], f.theta[2], f.theta[3]};
  if (!(truth.theta2 > 0.0)) throw DataError("theta2 must be positive");
  std::vector<double> times;
  for (double t = 0.0; t <= f.t_max + 1e-9; t += f.t_step) times.push_back(t);
  RngStream stream(f.common.seed, 0);
  const auto data = sample_curve_data(truth, times, f.noise, stream);
  std::ostringstream csv;
  csv << csv_preamble() << "# t,length\n";
  for (const auto& p : data) csv << fmt(p.t) << "," << fmt(p.length) << "\n";
  write_text(out_path(f.common.out, ".csv"), csv.str());
  return 0;
}

// ---- verify ----

struct VerifyFlags {
  CommonFlags common;
  int m = 2;
  std::vector<double> sigma;  ///< row-major; empty = identity
  double alpha = 0.05;
  std::size_t reps = 1000000;
  std::size_t n = 400;
  std::vector<std::size_t> n_grid{100, 400, 1600};
  std::size_t M = 2000;
  std::string dist = "null";
  std::vector<double> v{1.0, -1.0};
};

SimDistribution verify_distribution(const std::string& name) {
  if (name == "null") return CircleNullMixture{};
  if (name == "point-masses") return EmpiricalCircle{{Angle(0.0), Angle(std::numbers::pi)}};
  throw DataError("--dist must be null or point-masses");
}

int verify_exit(const json& report) { return report["pass"].get<bool>() ? 0 : kExitFailed; }

int cmd_verify_quantile_sum(const VerifyFlags& f) {
  if (f.m < 2) throw DataError("--m must be at least 2");
  Eigen::MatrixXd sigma = Eigen::MatrixXd::Identity(f.m, f.m);
  if (!f.sigma.empty()) {
    if (f.sigma.size() != static_cast<std::size_t>(f.m * f.m)) throw DataError("--sigma needs m*m entries");
    sigma = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(f.sigma.data(),
                                                                                                     f.m, f.m);
  }
  json j = provenance(f.common.seed);
  j["report"] = to_json(verify_quantile_sum(sigma, f.alpha, f.reps, f.common.seed, f.common.threads));
  write_json(f.common.out, j);
  return verify_exit(j["report"]);
}

int cmd_verify_loss_clt(const VerifyFlags& f) {
  const auto anchors = circle_null_anchors();
  json j = provenance(f.common.seed);
  j["dist"] = f.dist;
  j["report"] = to_json(verify_loss_clt(verify_distribution(f.dist), anchors, f.n, f.M, f.common.seed, 0.15, 0.01,
                                        f.common.threads));
  write_json(f.common.out, j);
  return verify_exit(j["report"]);
}

int cmd_verify_loss_cov(const VerifyFlags& f) {
  const auto anchors = circle_null_anchors();
  const Eigen::VectorXd v = Eigen::Map<const Eigen::VectorXd>(f.v.data(), static_cast<Eigen::Index>(f.v.size()));
  json j = provenance(f.common.seed);
  j["dist"] = f.dist;
  j["report"] = to_json(
      verify_loss_covariance(verify_distribution(f.dist), anchors, f.n_grid, f.M, v, f.common.seed, f.common.threads));
  write_json(f.common.out, j);
  return verify_exit(j["report"]);
}

// ---- calibrate ----

struct CalibrateFlags {
  CommonFlags common;
  std::size_t n = 10000;
  double level = kDefaultDetectorLevel;
  int reps = kDefaultCalibrationReps;
  std::uint64_t detector_seed = kDefaultCalibrationSeed;
};

int cmd_calibrate(const CalibrateFlags& f) {
  CalibrationCache cache(f.common.calibration_cache);
  const Calibration cal = cache.get(f.n, f.level, f.reps, f.detector_seed);
  json j = provenance(f.detector_seed);
  j["n"] = cal.n;
  j["level"] = cal.level;
  j["mc_reps"] = cal.mc_reps;
  j["kappa"] = cal.kappa;
  write_json(f.common.out, j);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  for (int i = 0; i < argc; ++i) g_invocation += (i ? " " : "") + std::string(argv[i]);

  CLI::App app{"Bootstrap test for non-uniqueness of m-estimators"};
  app.require_subcommand(1);

  TestFlags tf;
  auto* test = app.add_subcommand("test", "Run the test on a dataset");
  add_common(test, tf.common);
  test->add_option("--kind", tf.kind, "circle | sphere | curve | euclidean")->required();
  test->add_option("--data", tf.data, "Input file")->required();
  test->add_option("--unit", tf.unit, "Angle unit for circle data: rad | deg");
  test->add_option("--gmm-k", tf.gmm_k, "Mixture components (euclidean data)");
  test->add_option("--gmm-starts", tf.gmm_starts, "Random EM starts per fit");
  test->add_option("--curve-starts", tf.curve_starts, "Random Nelder-Mead starts per fit");
  test->add_flag("--constrain", tf.constrain, "Curve fit: enforce theta1*theta2 >= -30");
  test->add_option("--B", tf.B, "Bootstrap replicates");
  test->add_option("--alpha", tf.alpha, "Significance level");
  test->add_flag("--no-ell", tf.no_ell, "Skip the principal-component summary");
  test->add_flag("--no-d", tf.no_d, "Skip the distance summary");

  SimulateFlags sf;
  auto* simulate = app.add_subcommand("simulate", "Simulation studies and synthetic data");
  simulate->require_subcommand(1);
  auto* size = simulate->add_subcommand("size", "Sorted p-values under the null, one CSV per n");
  auto* power = simulate->add_subcommand("power", "Rejection rates over an (a, n) grid");
  auto* curve = simulate->add_subcommand("curve-data", "Synthetic growth-curve data");
  for (auto* sub : {size, power, curve}) add_common(sub, sf.common);
  for (auto* sub : {size, power}) {
    sub->add_option("--n", sf.n, "Sample sizes");
    sub->add_option("--trials", sf.trials, "Simulated datasets per cell");
    sub->add_option("--B", sf.B, "Bootstrap replicates");
    sub->add_option("--alpha", sf.alpha, "Significance level");
    sub->add_option("--sd", sf.sd, "Wrapped normal sd of the circle mixture");
  }
  size->add_option("--dim", sf.dim, "Sphere dimension p (1: circle)");
  power->add_option("--a", sf.a, "Mixture offsets");
  curve->add_option("--theta", sf.theta, "theta1 theta2 theta3 theta4");
  curve->add_option("--t-max", sf.t_max, "Last time point");
  curve->add_option("--t-step", sf.t_step, "Time step");
  curve->add_option("--noise", sf.noise, "Gaussian noise sd");

  VerifyFlags vf;
  auto* verify = app.add_subcommand("verify", "Monte Carlo checks of the limit theory");
  verify->require_subcommand(1);
  auto* vq = verify->add_subcommand("quantile-sum", "Normal quantile-sum bound");
  auto* vc = verify->add_subcommand("loss-clt", "CLT for local loss differences");
  auto* vv = verify->add_subcommand("loss-cov", "Plug-in loss covariance rate");
  for (auto* sub : {vq, vc, vv}) add_common(sub, vf.common);
  vq->add_option("--m", vf.m, "Dimension");
  vq->add_option("--sigma", vf.sigma, "Covariance, row-major (default identity)");
  vq->add_option("--alpha", vf.alpha, "Level");
  vq->add_option("--reps", vf.reps, "Monte Carlo draws");
  for (auto* sub : {vc, vv}) {
    sub->add_option("--M", vf.M, "Monte Carlo samples");
    sub->add_option("--dist", vf.dist, "null | point-masses");
  }
  vc->add_option("--n", vf.n, "Sample size");
  vv->add_option("--n", vf.n_grid, "Sample sizes");
  vv->add_option("--v", vf.v, "Contrast vector");

  CalibrateFlags cf;
  auto* calibrate = app.add_subcommand("calibrate", "Compute and cache a slope-detector calibration");
  add_common(calibrate, cf.common);
  calibrate->add_option("--n", cf.n, "Number of sorted values");
  calibrate->add_option("--level", cf.level, "Detector level");
  calibrate->add_option("--reps", cf.reps, "Monte Carlo repetitions");
  calibrate->add_option("--detector-seed", cf.detector_seed, "Calibration seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitData;
  }

  try {
    if (*test) return cmd_test(tf);
    if (*size) return cmd_simulate_size(sf);
    if (*power) return cmd_simulate_power(sf);
    if (*curve) return cmd_simulate_curve(sf);
    if (*vq) return cmd_verify_quantile_sum(vf);
    if (*vc) return cmd_verify_loss_clt(vf);
    if (*vv) return cmd_verify_loss_cov(vf);
    if (*calibrate) return cmd_calibrate(cf);
  } catch (const DataError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitData;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric failure: %s\n", e.what());
    return kExitNumeric;
  }
  return kExitData;
}
