// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>

#include "fixtures.hpp"
#include "oracle.hpp"
#include "umri/brp.hpp"
#include "umri/predict.hpp"
#include "umri/sbrp.hpp"
#include "umri/synth.hpp"

using namespace umri;
namespace fs = std::filesystem;

namespace {

struct Fixture {
  std::string name;
  DecisionDataset data;
  bool degenerate;
};

std::vector<Fixture> all_fixtures() {
  std::vector<Fixture> out{{"d2", fixtures::d2(), false},
                           {"symmetric", fixtures::symmetric_dataset(), false},
                           {"symmetric3", fixtures::symmetric3_dataset(), false}};
  for (std::uint64_t seed : {1, 2})
    out.push_back({"feasible" + std::to_string(seed), generate_feasible_dataset(4, 3, 3, 0.01, seed).dataset, false});
  out.push_back({"uniform", fixtures::uniform_dataset(3, 3), true});
  out.push_back({"identical", fixtures::identical_dataset(), true});
  return out;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

int failures = 0;

void report(int id, bool pass, const std::string& detail) {
  std::printf("criterion %2d %s  %s\n", id, pass ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

std::vector<Matrix> choices(const DecisionDataset& d) {
  std::vector<Matrix> p;
  for (std::size_t k = 0; k < d.num_agents(); ++k) p.push_back(d.choice(k));
  return p;
}

// Largest strict residual of a profile by the naive oracle.
double worst_residual(const DecisionDataset& d, const UtilityProfile& p) {
  double worst = oracle::worst_niac(d.prior(), choices(d), p.utilities, p.costs);
  for (std::size_t k = 0; k < d.num_agents(); ++k)
    worst = std::max(worst, oracle::worst_nias(d.prior(), d.choice(k), p.utilities[k]));
  return worst;
}

double profile_l1(const std::vector<Matrix>& us) {
  double s = 0.0;
  for (const Matrix& u : us) s += u.cwiseAbs().sum();
  return s;
}

void criterion1() {
  const auto t0 = std::chrono::steady_clock::now();
  int ok = 0;
  double lowest = 1e300;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    const GroundTruth g = generate_feasible_dataset(5, 4, 4, 0.01, seed);
    const double e = brp_max_margin(g.dataset).report.epsilon_star;
    lowest = std::min(lowest, e);
    if (e >= 0.01) ++ok;
  }
  const double t = seconds_since(t0);
  report(1, ok == 100 && t < 60.0, fmt("%.0f/100 seeds with eps* >= 0.01, min eps* %.4g, %.2f s", ok, lowest, t));
}

void criterion2() {
  double worst_r = 0.0;
  for (auto [agents, n] : {std::pair<std::size_t, std::size_t>{2, 2}, {3, 3}, {5, 4}}) {
    const DecisionDataset d = fixtures::uniform_dataset(agents, n);
    worst_r = std::max({worst_r, std::abs(brp_max_margin(d).report.robustness),
                        std::abs(sbrp_max_margin(d).robustness)});
  }
  const DecisionDataset same = fixtures::identical_dataset();
  const double e_brp = brp_max_margin(same).report.epsilon_star;
  const double e_sbrp = sbrp_max_margin(same).epsilon_star;
  report(2, worst_r <= 1e-6 && e_brp <= 1e-7 && e_sbrp <= 1e-7,
         fmt("uniform max |R| %.3g; identical eps* %.3g (multi), %.3g (shared)", worst_r, e_brp, e_sbrp));
}

void criterion3() {
  const DecisionDataset d = fixtures::d2();
  const BrpFit fit = brp_max_margin(d);
  const double e = fit.report.epsilon_star;
  const double worst = worst_residual(d, fit.profile);
  report(3, e >= 0.04 && worst <= -e + 1e-9, fmt("eps* %.6g, worst residual %.6g", e, worst));
}

void criterion4() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(2024);
  int positive = 0, violations = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const Vector prior = random_stochastic(1, 2, rng).row(0).transpose();
    const DecisionDataset d =
        fixtures::make(prior, {random_stochastic(2, 2, rng), random_stochastic(2, 2, rng)});
    const GridOracleResult g = grid_oracle(d);
    if (g.best_margin <= 0.0) continue;
    ++positive;
    if (brp_max_margin(d).report.epsilon_star < g.best_margin - 1e-9) ++violations;
  }
  const double t = seconds_since(t0);
  report(4, violations == 0 && t < 120.0,
         fmt("%.0f oracle-positive cases, %.0f violations, %.2f s", positive, violations, t));
}

// Cost anchoring and the optimality inequality for one fitted model.
// value(k, p) = J(p, u_k) - C(p) scaled per agent; anchors at p_k.
struct AnchorCheck {
  double anchor_err = 0.0;
  double inequality = -1e300;  // largest (rhs - lhs); must be <= tol
};

void check_profile_cost(const DecisionDataset& d, const UtilityProfile& prof, Rng& rng, AnchorCheck& out) {
  const PiecewiseAffineCost c = reconstruct_cost(d, prof);
  std::vector<Matrix> probes = choices(d);
  for (int i = 0; i < 100; ++i) probes.push_back(random_stochastic(d.num_states(), d.num_actions(), rng));
  for (std::size_t k = 0; k < d.num_agents(); ++k) {
    out.anchor_err = std::max(out.anchor_err, std::abs(c.evaluate(d.choice(k)) - prof.costs[k]));
    const double lhs = oracle::F(d.prior(), d.choice(k), prof.utilities[k]) - prof.costs[k];
    for (const Matrix& p : probes)
      out.inequality = std::max(out.inequality, oracle::J(d.prior(), p, prof.utilities[k]) - c.evaluate(p) - lhs);
  }
}

void check_shared_cost(const DecisionDataset& d, const SharedUtilitySolution& s, Rng& rng, AnchorCheck& out) {
  const PiecewiseAffineCost c = reconstruct_cost_compact(d, s);
  std::vector<Matrix> probes = choices(d);
  for (int i = 0; i < 100; ++i) probes.push_back(random_stochastic(d.num_states(), d.num_actions(), rng));
  for (std::size_t k = 0; k < d.num_agents(); ++k) {
    const double lambda = s.sensitivities[k];
    out.anchor_err = std::max(out.anchor_err, std::abs(c.evaluate(d.choice(k)) - s.costs[k]));
    const double lhs = oracle::F(d.prior(), d.choice(k), s.utility) - lambda * s.costs[k];
    for (const Matrix& p : probes)
      out.inequality = std::max(out.inequality, oracle::J(d.prior(), p, s.utility) - lambda * c.evaluate(p) - lhs);
  }
}

void criterion5(const std::vector<Fixture>& fx) {
  Rng rng(5);
  AnchorCheck a;
  for (const Fixture& f : fx) {
    const BrpFit fit = brp_max_margin(f.data);
    check_profile_cost(f.data, fit.profile, rng, a);
    const SbrpFit sfit = sbrp_max_margin(f.data);
    check_shared_cost(f.data, sfit.solution, rng, a);
    if (!f.degenerate) {
      check_profile_cost(f.data, brp_sparsest(f.data, fit), rng, a);
      check_shared_cost(f.data, sbrp_sparsest(f.data, sfit), rng, a);
    }
  }
  report(5, a.anchor_err <= 1e-8 && a.inequality <= 1e-9,
         fmt("max |C(p_k) - c_k| %.3g, max inequality excess %.3g", a.anchor_err, a.inequality));
}

double scaled_residual_error(const DecisionDataset& d, const UtilityProfile& p, double t) {
  const UtilityProfile s = scale_profile(p, t);
  const Matrix base = niac_residuals(d, p.utilities, p.costs);
  double err = (niac_residuals(d, s.utilities, s.costs) - t * base).cwiseAbs().maxCoeff();
  const NiasResiduals n0 = nias_residuals(d, p.utilities);
  const NiasResiduals n1 = nias_residuals(d, s.utilities);
  for (std::size_t k = 0; k < d.num_agents(); ++k)
    for (std::size_t a = 0; a < d.num_actions(); ++a)
      for (std::size_t b = 0; b < d.num_actions(); ++b) err = std::max(err, std::abs(n1(k, a, b) - t * n0(k, a, b)));
  return err;
}

// Robustness recomputed from residuals after normalization.
double normalized_robustness(const DecisionDataset& d, const UtilityProfile& p) {
  const UtilityProfile n = normalize_profile(p);
  const double eps = -std::max(nias_residuals(d, n.utilities).max_strict(),
                               max_off_diagonal(niac_residuals(d, n.utilities, n.costs)));
  double norms = 0.0;
  for (const Matrix& u : n.utilities) norms += u.squaredNorm();
  return eps * static_cast<double>(d.num_agents()) / norms;
}

double normalized_robustness(const DecisionDataset& d, const SharedUtilitySolution& s) {
  const SharedUtilitySolution n = scale_solution(s, 1.0 / s.utility.norm());
  return -max_strict_residual(sbrp_residuals(d, n)) / n.utility.squaredNorm();
}

void criterion6(const std::vector<Fixture>& fx) {
  double res_err = 0.0, rob_err = 0.0;
  for (const Fixture& f : fx) {
    if (f.degenerate) continue;
    const BrpFit fit = brp_max_margin(f.data);
    const SbrpFit sfit = sbrp_max_margin(f.data);
    const SbrpResiduals base = sbrp_residuals(f.data, sfit.solution);
    const double r0 = normalized_robustness(f.data, fit.profile);
    const double s0 = normalized_robustness(f.data, sfit.solution);
    for (double t : {0.5, 2.0}) {
      res_err = std::max(res_err, scaled_residual_error(f.data, fit.profile, t));
      const SharedUtilitySolution ss = scale_solution(sfit.solution, t);
      const SbrpResiduals r = sbrp_residuals(f.data, ss);
      res_err = std::max(res_err, (r.coupling - t * base.coupling).cwiseAbs().maxCoeff());
      rob_err = std::max(rob_err, std::abs(normalized_robustness(f.data, scale_profile(fit.profile, t)) - r0));
      rob_err = std::max(rob_err, std::abs(normalized_robustness(f.data, ss) - s0));
    }
  }
  report(6, res_err <= 1e-9 && rob_err <= 1e-9,
         fmt("max residual scaling error %.3g, max robustness drift %.3g", res_err, rob_err));
}

void criterion7(const std::vector<Fixture>& fx) {
  // Sparse and max-margin solutions compared under the same rescaling, i.e.
  // in the units of the programs that produced them.
  double excess = -1e300;
  for (const Fixture& f : fx) {
    if (f.degenerate) continue;
    const BrpFit fit = brp_max_margin(f.data);
    excess = std::max(excess, profile_l1(brp_sparsest_raw(f.data, fit).utilities) - profile_l1(fit.profile.utilities));
    const SbrpFit sfit = sbrp_max_margin(f.data);
    excess = std::max(excess, sbrp_sparsest_raw(f.data, sfit).utility.cwiseAbs().sum() -
                                  sfit.solution.utility.cwiseAbs().sum());
  }
  report(7, excess <= 1e-9, fmt("max (sparse L1 - max-margin L1) %.3g", excess));
}

void criterion8(const std::vector<Fixture>& fx) {
  double worst_drop = 0.0, worst_gap = -1e300;
  std::vector<DecisionDataset> sets;
  for (const Fixture& f : fx) sets.push_back(f.data);
  for (std::uint64_t seed = 1; seed <= 10; ++seed) sets.push_back(generate_feasible_dataset(4, 3, 3, 0.01, seed).dataset);
  for (const DecisionDataset& d : sets) {
    const SbrpFit fit = sbrp_max_margin(d);
    for (std::size_t i = 1; i < fit.epsilon_history.size(); ++i)
      worst_drop = std::max(worst_drop, fit.epsilon_history[i - 1] - fit.epsilon_history[i]);
    SbrpOptions fixed;
    fixed.fix_sensitivities = true;
    worst_gap = std::max(worst_gap, sbrp_max_margin(d, fixed).epsilon_star - brp_max_margin(d).report.epsilon_star);
  }
  report(8, worst_drop <= 0.0 && worst_gap <= 1e-9,
         fmt("largest history drop %.3g, max (fixed-lambda eps - multi eps) %.3g", worst_drop, worst_gap));
}

void criterion9() {
  const auto t0 = std::chrono::steady_clock::now();
  constexpr std::size_t kStates = 4;
  double worst_mean_delta = 0.0, worst_kl = 0.0, worst_tv = 0.0;
  bool exact = true;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const std::vector<double> etas = default_etas(11);
    const NoiseFamilyTruth truth = make_noise_family_truth(kStates, etas.front(), etas.back(), seed);
    const NoiseFamily f = fit_family(sample_noise_family(truth, etas), etas);
    double delta_sum = 0.0;
    for (std::size_t g = 0; g + 1 < etas.size(); ++g) {
      const double mid = 0.5 * (etas[g] + etas[g + 1]);
      const PredictionOutcome o = predict_at(f, mid, truth.strategy(mid));
      delta_sum += o.score->delta.sum();
      worst_kl = std::max(worst_kl, o.score->kl);
    }
    worst_mean_delta = std::max(worst_mean_delta, delta_sum / (10.0 * kStates));
    for (std::size_t g = 0; g < etas.size(); ++g) {
      const PredictionOutcome o = predict_at(f, etas[g]);
      if (o.interpolated_utility != f.fitted.utilities[g]) exact = false;
      for (Eigen::Index x = 0; x < static_cast<Eigen::Index>(kStates); ++x)
        worst_tv = std::max(worst_tv, 0.5 * (o.predicted_choice.row(x) - f.dataset.choice(g).row(x)).cwiseAbs().sum());
    }
  }
  const double t = seconds_since(t0);
  report(9, worst_mean_delta <= 0.06 && worst_kl <= 0.02 && exact && worst_tv <= 2e-2,
         fmt("worst per-seed mean delta %.4f, worst KL %.4f, endpoint TV %.3g", worst_mean_delta, worst_kl, worst_tv) +
             (exact ? ", endpoint utilities exact" : ", endpoint utilities differ") + fmt(", %.2f s", t));
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

bool run_pipeline(const fs::path& dir) {
  fs::remove_all(dir);
  fs::create_directories(dir);
  const std::string exe = UMRI_CLI_PATH;
  const std::vector<std::string> steps{
      "synth --kind family --states 3 --seed 7 --out family.json",
      "test --dataset family.json --out profile.json",
      "sparse --dataset family.json --out sparse.json",
      "predict --family family.json --midpoints --out prediction.csv --summary summary.json",
      "report --dataset family.json --profile profile.json --profile sparse.json --prediction prediction.csv "
      "--summary summary.json --out-dir report"};
  for (const auto& s : steps) {
    const std::string cmd = "cd \"" + dir.string() + "\" && \"" + exe + "\" " + s + " 2>/dev/null";
    if (std::system(cmd.c_str()) != 0) return false;
  }
  return true;
}

void criterion10() {
  const fs::path root = fs::temp_directory_path() / "umri_acceptance";
  const bool ran = run_pipeline(root / "a") && run_pipeline(root / "b");
  std::size_t files = 0, differing = 0;
  if (ran) {
    for (const auto& e : fs::recursive_directory_iterator(root / "a")) {
      if (!e.is_regular_file()) continue;
      ++files;
      const fs::path other = root / "b" / fs::relative(e.path(), root / "a");
      if (!fs::exists(other) || slurp(e.path()) != slurp(other)) ++differing;
    }
  }
  fs::remove_all(root);
  report(10, ran && files > 0 && differing == 0,
         ran ? fmt("%.0f output files, %.0f differ", static_cast<double>(files), static_cast<double>(differing))
             : std::string("pipeline failed"));
}

}  // namespace

int main() {
  const std::vector<Fixture> fx = all_fixtures();
  criterion1();
  criterion2();
  criterion3();
  criterion4();
  criterion5(fx);
  criterion6(fx);
  criterion7(fx);
  criterion8(fx);
  criterion9();
  criterion10();
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
