// Acceptance suite: one pass/fail line per criterion, nonzero exit when any
// criterion fails. Criterion 10 needs the AIDS trial CSV (see README); it is
// skipped when RITR_AIDS_CSV is unset.
#include <chrono>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "ritr/inference.hpp"
#include "ritr/simulation.hpp"
#include "ritr/value_estimation.hpp"

using namespace ritr;

namespace {

int g_failures = 0;

void report(int criterion, const char* label, bool pass, const std::string& detail) {
  std::printf("%s criterion %2d: %s (%s)\n", pass ? "PASS" : "FAIL", criterion, label,
              detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

double seconds_since(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() -
                                                               t0)
             .count() /
         1000.0;
}

std::string fmt(const char* format, ...) {
  char buf[512];
  va_list args;
  va_start(args, format);
  std::vsnprintf(buf, sizeof(buf), format, args);
  va_end(args);
  return buf;
}

ModelSpec linear_spec(int p) {
  ModelSpec spec;
  spec.baseline_map = FeatureMap::linear(p);
  spec.contrast_map = FeatureMap::linear(p);
  return spec;
}

// ---------------------------------------------------------------------------

void criterion1_loss_properties() {
  const auto t0 = std::chrono::steady_clock::now();
  const int cases = 1000000;
  RandomStream rng(20240801);
  long violations = 0;

  // Lipschitz shift bound
  for (int i = 0; i < cases; ++i) {
    const double tau = rng.uniform(0.001, 0.999);
    const double x = rng.uniform(-100.0, 100.0);
    const double y = rng.uniform(-100.0, 100.0);
    if (std::abs(pinball_loss(tau, x - y) - pinball_loss(tau, x)) > std::abs(y) + 1e-12)
      ++violations;
  }
  // shift decomposition identity
  for (int i = 0; i < cases; ++i) {
    const double tau = rng.uniform(0.001, 0.999);
    const double x = rng.uniform(-100.0, 100.0);
    const double y = rng.uniform(-100.0, 100.0);
    const double direct = pinball_loss(tau, x - y) - pinball_loss(tau, x);
    if (std::abs(pinball_shift_decomposition(tau, x, y) - direct) > 1e-12) ++violations;
  }
  // convexity midpoint test over all loss kinds
  const std::vector<LossSpec> specs = {LossSpec::squared(), LossSpec::pinball(0.5),
                                       LossSpec::pinball(0.25), LossSpec::huber(1.0),
                                       LossSpec::eps_insensitive(0.4)};
  for (int i = 0; i < cases; ++i) {
    const LossSpec& spec = specs[static_cast<std::size_t>(i % specs.size())];
    const double r1 = rng.uniform(-50.0, 50.0);
    const double r2 = rng.uniform(-50.0, 50.0);
    if (loss_value(spec, 0.5 * (r1 + r2)) >
        0.5 * (loss_value(spec, r1) + loss_value(spec, r2)) + 1e-12)
      ++violations;
    if (loss_value(spec, r1) < 0.0) ++violations;
  }
  // positive homogeneity of the pinball loss
  for (int i = 0; i < cases; ++i) {
    const double tau = rng.uniform(0.001, 0.999);
    const double x = rng.uniform(-50.0, 50.0);
    const double c = rng.uniform(0.001, 100.0);
    const double lhs = pinball_loss(tau, c * x);
    const double rhs = c * pinball_loss(tau, x);
    if (std::abs(lhs - rhs) > 1e-12 * std::max(1.0, std::abs(rhs)) + 1e-12) ++violations;
  }
  const double dt = seconds_since(t0);
  report(1, "loss property suite", violations == 0 && dt < 10.0,
         fmt("%ld violations over 4x10^6 cases, %.1fs", violations, dt));
}

void criterion2_solver_oracles() {
  const auto t0 = std::chrono::steady_clock::now();
  RandomStream rng(77001);
  double worst_sq = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const test::RandomInstance inst = test::random_instance(rng, 60, 4);
    const Eigen::VectorXd ours = minimize(inst.D, inst.y, LossSpec::squared()).theta;
    const Eigen::VectorXd oracle = test::normal_equation_oracle(inst.D, inst.y);
    worst_sq = std::max(worst_sq, (ours - oracle).lpNorm<Eigen::Infinity>());
  }
  double worst_gap = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 12 + static_cast<int>(rng.uniform01() * 18);
    const int d = 1 + static_cast<int>(rng.uniform01() * 3);
    const double tau = rng.uniform(0.1, 0.9);
    const test::RandomInstance inst = test::random_instance(rng, n, d);
    const Eigen::VectorXd theta = minimize(inst.D, inst.y, LossSpec::pinball(tau)).theta;
    const double ours = test::exact_objective(inst.D, inst.y, LossSpec::pinball(tau), theta);
    const double oracle = test::pinball_subset_oracle_min(inst.D, inst.y, tau);
    worst_gap = std::max(worst_gap, ours - oracle);
  }
  const double dt = seconds_since(t0);
  report(2, "solver oracle equivalence", worst_sq <= 1e-8 && worst_gap <= 1e-5 && dt < 60.0,
         fmt("squared max-norm %.2e, pinball objective gap %.2e, %.1fs", worst_sq, worst_gap, dt));
}

void criterion3_table1_cells() {
  const auto t0 = std::chrono::steady_clock::now();
  Scenario ls_cell;
  ls_cell.family = TruthFamily::model_I;
  ls_cell.n = 400;
  ls_cell.replications = 200;
  ls_cell.validation_size = 10000;
  const CellResult ls = run_cell(ls_cell, {Method::ls()}, {}, 2)[0];

  Scenario pin_cell = ls_cell;
  pin_cell.error_law = ErrorLaw::cauchy;
  pin_cell.n = 200;
  const CellResult pin = run_cell(pin_cell, {Method::pinball(0.5)}, {}, 2)[0];

  const double dt = seconds_since(t0);
  const bool pass = ls.pcd.defined && std::abs(ls.pcd.mean - 90.3) <= 1.5 && ls.mse.defined &&
                    std::abs(ls.mse.mean - 0.33) <= 0.2 * 0.33 && pin.pcd.defined &&
                    std::abs(pin.pcd.mean - 81.3) <= 2.0 && dt < 300.0;
  report(3, "study-one spot cells", pass,
         fmt("LS n=400 normal: pcd %.1f (target 90.3+-1.5), mse %.3f (target 0.33+-20%%); "
             "P(0.5) n=200 cauchy: pcd %.1f (target 81.3+-2); %.1fs",
             ls.pcd.mean, ls.mse.mean, pin.pcd.mean, dt));
}

void criterion4_table2_cell() {
  Scenario sc;
  sc.family = TruthFamily::model_II;
  sc.error_law = ErrorLaw::log_normal;
  sc.n = 800;
  sc.replications = 200;
  sc.validation_size = 10000;
  const CellResult cell = run_cell(sc, {Method::pinball(0.25)}, {}, 2)[0];
  const bool pass = cell.mse.defined && std::abs(cell.mse.mean - 0.01) <= 0.5 * 0.01 &&
                    cell.pcd.defined && std::abs(cell.pcd.mean - 97.9) <= 1.5;
  report(4, "study-one log-normal quartile cell", pass,
         fmt("P(0.25) n=800 log-normal: mse %.4f (target 0.01+-50%%), pcd %.1f (target 97.9+-1.5)",
             cell.mse.mean, cell.pcd.mean));
}

void criterion5_table3_ordering() {
  Scenario sc;
  sc.family = TruthFamily::interaction;
  sc.sigma_kind = SigmaKind::treatment_interacted;
  sc.error_law = ErrorLaw::gamma_centered;
  sc.d0 = 10.0;
  sc.n = 800;
  sc.replications = 200;
  sc.validation_size = 10000;
  const auto cells = run_cell(sc, Method::standard_four(), {}, 2);
  const CellResult& ls = cells[0];
  const CellResult& p05 = cells[1];
  const CellResult& p25 = cells[2];
  const CellResult& huber = cells[3];

  auto smallest = [&](auto metric) {
    double best = metric(ls);
    best = std::min(best, metric(p05));
    best = std::min(best, metric(p25));
    return std::min(best, metric(huber));
  };
  const bool ls_best_mu =
      ls.delta_mu.mean <= smallest([](const CellResult& c) { return c.delta_mu.mean; });
  const bool p05_best_05 =
      p05.delta_05.mean <= smallest([](const CellResult& c) { return c.delta_05.mean; });
  const bool p25_best_025 =
      p25.delta_025.mean <= smallest([](const CellResult& c) { return c.delta_025.mean; });
  const bool ls_level = std::abs(ls.delta_025.mean - 0.78) <= 0.25 * 0.78;

  report(5, "interaction-model value-gap ordering",
         ls_best_mu && p05_best_05 && p25_best_025 && ls_level,
         fmt("delta_mu: LS %.3f P05 %.3f P25 %.3f H %.3f | delta_0.5: %.4f %.4f %.4f %.4f | "
             "delta_0.25: %.3f %.3f %.3f %.3f | LS delta_0.25 target 0.78+-25%%",
             ls.delta_mu.mean, p05.delta_mu.mean, p25.delta_mu.mean, huber.delta_mu.mean,
             ls.delta_05.mean, p05.delta_05.mean, p25.delta_05.mean, huber.delta_05.mean,
             ls.delta_025.mean, p05.delta_025.mean, p25.delta_025.mean, huber.delta_025.mean));
}

void criterion6_cauchy_robustness() {
  // n = 200 is the onset cell; the blowout event is driven by the largest
  // Cauchy draw, so a single cell at the pinned seed is the deterministic
  // instance of the pattern.
  Scenario sc;
  sc.family = TruthFamily::model_II;
  sc.error_law = ErrorLaw::cauchy;
  sc.n = 200;
  sc.replications = 1000;
  sc.validation_size = 2000;
  const auto cells = run_cell(sc, {Method::ls(), Method::pinball(0.5)}, {}, 2);
  const bool ls_blank = cells[0].mse_suppressed && !cells[0].mse.defined;
  const bool pin_finite = cells[1].mse.defined && cells[1].mse.mean < 1.5;
  report(6, "Cauchy blank-vs-finite pattern", ls_blank && pin_finite,
         fmt("n=200, 1000 reps: LS %s (threshold 1e4), P(0.5) mse %.3f (cap 1.5)",
             ls_blank ? "suppressed" : "NOT suppressed", cells[1].mse.mean));
}

void criterion7_asymptotics() {
  // (a) bound PSD across the tau grid on every fit
  bool psd_ok = true;
  double worst_eig = 0.0;
  {
    Scenario sc;
    sc.family = TruthFamily::model_II;
    sc.sigma_kind = SigmaKind::heterogeneous_x;
    sc.error_law = ErrorLaw::log_normal;
    sc.n = 400;
    const ModelSpec spec = linear_spec(3);
    for (int rep = 0; rep < 10; ++rep) {
      const auto [data, truth] = generate(sc, rep);
      for (double tau : {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9}) {
        const FittedModel fit = fit_rr(data, spec, LossSpec::pinball(tau));
        const AsymptoticCovariance cov = asymptotic_covariance_pinball(data, fit, tau);
        const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov.bound - cov.sigma11);
        worst_eig = std::min(worst_eig, eig.eigenvalues().minCoeff());
        if (eig.eigenvalues().minCoeff() < -1e-8) psd_ok = false;
      }
    }
  }

  // (b) known variance constant at the median, averaged over 20 fits
  bool remark_ok = true;
  double worst_ratio_dev = 0.0;
  {
    Scenario sc;
    sc.family = TruthFamily::model_II;
    sc.n = 4000;
    const ModelSpec spec = linear_spec(3);
    Eigen::VectorXd ratio_sum = Eigen::VectorXd::Zero(4);
    const int reps = 20;
    for (int rep = 0; rep < reps; ++rep) {
      const auto [data, truth] = generate(sc, rep);
      const FittedModel fit = fit_rr(data, spec, LossSpec::pinball(0.5));
      const AsymptoticCovariance cov = asymptotic_covariance_pinball(data, fit, 0.5);
      Eigen::MatrixXd xtxt = Eigen::MatrixXd::Zero(4, 4);
      for (Eigen::Index i = 0; i < data.n(); ++i) {
        Eigen::VectorXd xt(4);
        xt << 1.0, data.x(i, 0), data.x(i, 1), data.x(i, 2);
        xtxt += xt * xt.transpose();
      }
      xtxt /= static_cast<double>(data.n());
      const Eigen::MatrixXd target = 2.0 * M_PI * xtxt.inverse();
      for (int j = 0; j < 4; ++j)
        ratio_sum[j] += data.n() * cov.covariance(j, j) / target(j, j);
    }
    for (int j = 0; j < 4; ++j) {
      const double dev = std::abs(ratio_sum[j] / reps - 1.0);
      worst_ratio_dev = std::max(worst_ratio_dev, dev);
      if (dev > 0.15) remark_ok = false;
    }
  }

  // (c) Wald coverage over 500 replications
  int covered = 0, total = 0;
  {
    Scenario sc;
    sc.family = TruthFamily::model_II;
    sc.n = 800;
    const ModelSpec spec = linear_spec(3);
    std::vector<int> cover(500, 0);
    parallel_for_index(500, 2, [&](int rep) {
      const auto [data, truth] = generate(sc, rep);
      const FittedModel fit = fit_rr(data, spec, LossSpec::pinball(0.5));
      const AsymptoticCovariance cov = asymptotic_covariance_pinball(data, fit, 0.5);
      int c = 0;
      for (int j = 0; j < 4; ++j) {
        const double se = std::sqrt(cov.covariance(j, j));
        if (std::abs(fit.beta[0][j] - truth.beta0[j]) <= 1.96 * se) ++c;
      }
      cover[static_cast<std::size_t>(rep)] = c;
    });
    for (int c : cover) covered += c;
    total = 500 * 4;
  }
  const double rate = 100.0 * covered / total;
  const bool coverage_ok = std::abs(rate - 95.0) <= 3.0;

  report(7, "asymptotic covariance checks", psd_ok && remark_ok && coverage_ok,
         fmt("bound PSD min eig %.1e (floor -1e-8); variance ratio dev %.3f (cap 0.15, mean of "
             "20 fits at n=4000); coverage %.1f%% (target 95+-3)",
             worst_eig, worst_ratio_dev, rate));
}

void criterion8_bootstrap_calibration() {
  const auto t0 = std::chrono::steady_clock::now();
  Scenario sc;
  sc.family = TruthFamily::model_II;
  sc.n = 400;
  const ModelSpec spec = linear_spec(3);
  const int outer = 200;
  Eigen::MatrixXd betas(outer, 4);
  Eigen::MatrixXd boot_se(outer, 4);
  parallel_for_index(outer, 2, [&](int rep) {
    const auto [data, truth] = generate(sc, rep);
    betas.row(rep) = fit_rr(data, spec, LossSpec::squared()).beta[0].transpose();
    boot_se.row(rep) =
        bootstrap(data, spec, LossSpec::squared(), {}, 200, 9000 + rep).se.transpose();
  });
  bool pass = true;
  double worst = 0.0;
  for (int j = 0; j < 4; ++j) {
    const double mc_sd = sample_sd(betas.col(j));
    const double dev = std::abs(boot_se.col(j).mean() / mc_sd - 1.0);
    worst = std::max(worst, dev);
    if (dev > 0.2) pass = false;
  }
  const double dt = seconds_since(t0);
  report(8, "bootstrap se calibration", pass && dt < 300.0,
         fmt("max |mean boot se / mc sd - 1| = %.3f (cap 0.20, B=200, 200 reps), %.1fs", worst,
             dt));
}

void criterion9_value_estimators() {
  // hand-computed 4-row example
  Dataset d;
  d.y.resize(4);
  d.y << 10, 20, 30, 40;
  d.x.resize(4, 1);
  d.x << 0.1, 0.2, 0.3, 0.4;
  d.a.resize(4);
  d.a << 1, 0, 1, 0;
  d.prop = Eigen::MatrixXd::Constant(4, 1, 0.5);
  TreatmentRule always;
  always.contrast_map = FeatureMap::linear(1);
  always.beta = {Eigen::VectorXd(2)};
  always.beta[0] << 1.0, 0.0;
  const bool hand_ok = std::abs(ipwe(d, always).value - 20.0) <= 1e-12;

  // zero model reduces AIPWE to the unnormalized IPW mean
  FittedModel zero;
  zero.spec = linear_spec(1);
  zero.loss = LossSpec::squared();
  zero.beta = {Eigen::VectorXd::Zero(2)};
  zero.gamma = Eigen::VectorXd::Zero(2);
  const double ht = (10.0 / 0.5 + 30.0 / 0.5) / 4.0;
  const bool zero_ok = std::abs(aipwe(d, zero, always).value - ht) <= 1e-12;

  // agreement on correct-model synthetic data
  Scenario sc;
  sc.family = TruthFamily::model_II;
  sc.n = 4000;
  const auto [data, truth] = generate(sc, 0);
  const FittedModel fit = fit_rr(data, linear_spec(3), LossSpec::squared());
  const TreatmentRule rule = TreatmentRule::from_model(fit);
  const ValueEstimate vi = ipwe(data, rule);
  const ValueEstimate va = aipwe(data, fit, rule);
  const double combined = std::sqrt(vi.se * vi.se + va.se * va.se);
  const bool agree_ok = std::abs(vi.value - va.value) <= 3.0 * combined;

  report(9, "value estimator identities", hand_ok && zero_ok && agree_ok,
         fmt("4-row ipwe %.1f (want 20), zero-model aipwe %.2f (want %.2f), |ipwe-aipwe| %.3f vs "
             "3*se %.3f",
             ipwe(d, always).value, aipwe(d, zero, always).value, ht,
             std::abs(vi.value - va.value), 3.0 * combined));
}

void criterion10_aids_reproduction() {
  const char* path = std::getenv("RITR_AIDS_CSV");
  if (!path) {
    std::printf("SKIP criterion 10: AIDS trial reproduction (set RITR_AIDS_CSV to enable)\n");
    return;
  }
  // Accept either the full four-arm export or a pre-restricted two-arm file;
  // keep only the ZDV+ddI (arms=1) and ZDV+zalcitabine (arms=2) rows.
  std::ifstream in(path);
  if (!in) {
    report(10, "AIDS trial reproduction", false, std::string("cannot open ") + path);
    return;
  }
  std::string line;
  std::getline(in, line);
  const std::vector<std::string> header = detail::split_csv_line(line);
  std::size_t arms_col = header.size();
  for (std::size_t j = 0; j < header.size(); ++j)
    if (header[j] == "arms") arms_col = j;
  if (arms_col == header.size()) {
    report(10, "AIDS trial reproduction", false, "no 'arms' column");
    return;
  }
  std::ostringstream filtered;
  filtered << line << '\n';
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const std::vector<std::string> cells = detail::split_csv_line(line);
    if (cells[arms_col] == "1" || cells[arms_col] == "2") filtered << line << '\n';
  }

  CsvSchema schema;
  schema.outcome = "cd420";
  schema.treatment = "arms";
  schema.covariates = {"age",  "wtkg",   "karnof", "cd40", "cd80", "hemo",
                       "homo", "drugs",  "race",   "gender", "str2", "symptom"};
  schema.treatment_levels = {"2", "1"};  // ZDV+zalcitabine = 0, ZDV+ddI = 1
  std::istringstream data_in(filtered.str());
  const Dataset data = load_csv(data_in, schema);

  ModelSpec spec;
  spec.baseline_map = FeatureMap::linear(12);
  spec.contrast_map = FeatureMap::linear(12, {0, 6, 8});  // age, homo, race
  const FittedModel ls = fit_rr(data, spec, LossSpec::squared());
  const FittedModel huber = fit_rr(data, spec, LossSpec::huber_auto());
  const double ls_age = ls.beta[0][1];
  const double huber_age = huber.beta[0][1];
  const ValueEstimate value = aipwe(data, ls, TreatmentRule::from_model(ls));

  const bool pass = std::abs(ls_age - 3.13) <= 0.05 && std::abs(huber_age - 2.80) <= 0.05 &&
                    std::abs(value.value - 404.39) <= 1.0;
  report(10, "AIDS trial reproduction", pass,
         fmt("n=%ld, LS age %.3f (target 3.13+-0.05), Huber age %.3f (target 2.80+-0.05), "
             "AIPWE %.2f (target 404.39+-1.0)",
             static_cast<long>(data.n()), ls_age, huber_age, value.value));
}

}  // namespace

int main(int argc, char** argv) {
  // optional argument: run a single criterion by number
  const int only = argc > 1 ? std::atoi(argv[1]) : 0;
  const auto want = [&](int k) { return only == 0 || only == k; };
  if (want(1)) criterion1_loss_properties();
  if (want(2)) criterion2_solver_oracles();
  if (want(3)) criterion3_table1_cells();
  if (want(4)) criterion4_table2_cell();
  if (want(5)) criterion5_table3_ordering();
  if (want(6)) criterion6_cauchy_robustness();
  if (want(7)) criterion7_asymptotics();
  if (want(8)) criterion8_bootstrap_calibration();
  if (want(9)) criterion9_value_estimators();
  if (want(10)) criterion10_aids_reproduction();
  if (g_failures > 0) std::printf("%d criterion(s) failed\n", g_failures);
  return g_failures == 0 ? 0 : 1;
}
