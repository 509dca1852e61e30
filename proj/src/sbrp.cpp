#include "umri/sbrp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>

#include "umri/error.hpp"
#include "umri/lp.hpp"

namespace umri {

namespace {

constexpr double kCertificateTol = 1e-9;

void check_solution_shape(const DecisionDataset& d, const Matrix& u,
                          const std::vector<double>& sensitivities,
                          const std::vector<double>& costs, ErrorCode code) {
  if (static_cast<std::size_t>(u.rows()) != d.num_states() ||
      static_cast<std::size_t>(u.cols()) != d.num_actions()) {
    throw Error(code, "shared utility shape does not match dataset");
  }
  if (sensitivities.size() != d.num_agents() || costs.size() != d.num_agents()) {
    throw Error(code, "need one sensitivity and one cost per agent");
  }
}

std::vector<Matrix> joints_of(const DecisionDataset& d) {
  std::vector<Matrix> out;
  for (std::size_t k = 0; k < d.num_agents(); ++k) {
    out.push_back(d.prior().asDiagonal() * d.choice(k));
  }
  return out;
}

// (u, c, epsilon) program at fixed lambda. With a fixed margin the epsilon
// column is dropped and the margin moves to the right-hand side.
class SharedProgram {
 public:
  SharedProgram(const DecisionDataset& d, const std::vector<double>& lambda,
                std::optional<double> fixed_margin)
      : d_(d), fixed_(fixed_margin) {
    cells_ = d.num_states() * d.num_actions();
    for (std::size_t i = 0; i < cells_; ++i) lp_.add_variable(kPositiveFloor, 1.0);
    for (std::size_t k = 0; k < d.num_agents(); ++k) lp_.add_variable(kPositiveFloor, 1.0);
    if (!fixed_) eps_ = lp_.add_variable(0.0, 1.0, 1.0, "epsilon");

    for (std::size_t k = 0; k < d.num_agents(); ++k) {
      const JointPosterior jp = joint_and_posterior(d, k);
      for (std::size_t a = 0; a < d.num_actions(); ++a) {
        if (!jp.posterior[a]) continue;
        const Vector& q = *jp.posterior[a];
        for (std::size_t b = 0; b < d.num_actions(); ++b) {
          if (b == a) continue;
          std::vector<LinearProgram::Term> terms;
          for (std::size_t x = 0; x < d.num_states(); ++x) {
            const double w = q(static_cast<Eigen::Index>(x));
            if (w == 0.0) continue;
            terms.push_back({u_var(x, b), w});
            terms.push_back({u_var(x, a), -w});
          }
          add_row(std::move(terms));
        }
      }
    }

    const auto joints = joints_of(d);
    for (std::size_t j = 0; j < d.num_agents(); ++j) {
      for (std::size_t k = 0; k < d.num_agents(); ++k) {
        if (j == k) continue;
        const Matrix diff = joints[j] - joints[k];
        std::vector<LinearProgram::Term> terms;
        for (std::size_t x = 0; x < d.num_states(); ++x) {
          for (std::size_t a = 0; a < d.num_actions(); ++a) {
            const double w = diff(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(a));
            if (w != 0.0) terms.push_back({u_var(x, a), w});
          }
        }
        terms.push_back({c_var(k), lambda[k]});
        terms.push_back({c_var(j), -lambda[k]});
        add_row(std::move(terms));
      }
    }
  }

  LinearProgram& lp() { return lp_; }
  std::size_t u_var(std::size_t x, std::size_t a) const { return x * d_.num_actions() + a; }
  std::size_t c_var(std::size_t k) const { return cells_ + k; }

  Matrix utility(const std::vector<double>& z) const {
    Matrix u(d_.num_states(), d_.num_actions());
    for (std::size_t x = 0; x < d_.num_states(); ++x) {
      for (std::size_t a = 0; a < d_.num_actions(); ++a) {
        u(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(a)) = z[u_var(x, a)];
      }
    }
    return u;
  }

  std::vector<double> costs(const std::vector<double>& z) const {
    std::vector<double> c;
    for (std::size_t k = 0; k < d_.num_agents(); ++k) c.push_back(z[c_var(k)]);
    return c;
  }

  double epsilon(const std::vector<double>& z) const { return fixed_ ? *fixed_ : z[eps_]; }

 private:
  void add_row(std::vector<LinearProgram::Term> terms) {
    if (fixed_) {
      lp_.add_constraint(std::move(terms), -*fixed_);
    } else {
      terms.push_back({eps_, 1.0});
      lp_.add_constraint(std::move(terms), 0.0);
    }
  }

  const DecisionDataset& d_;
  std::optional<double> fixed_;
  std::size_t cells_ = 0;
  std::size_t eps_ = 0;
  LinearProgram lp_;
};

LpSolution solve_or_throw(const LinearProgram& lp, kernels::Execution exec, const char* what) {
  SimplexOptions so;
  so.execution = exec;
  LpSolution sol = solve_lp(lp, so);
  if (sol.status != LpStatus::Optimal) {
    throw Error(ErrorCode::NumericalFailure, std::string(what) + " reported non-optimal status");
  }
  return sol;
}

struct Step {
  Matrix utility;
  std::vector<double> lambda;
  std::vector<double> costs;
  double epsilon = 0.0;
};

Step solve_utility_step(const DecisionDataset& d, const std::vector<double>& lambda,
                        kernels::Execution exec) {
  SharedProgram program(d, lambda, std::nullopt);
  const LpSolution sol = solve_or_throw(program.lp(), exec, "shared-utility program");
  return Step{program.utility(sol.point), lambda, program.costs(sol.point),
              program.epsilon(sol.point)};
}

// Largest shared-utility action-switch margin, ignoring the coupling rows.
// Used as the starting utility: at lambda = 1 the coupling rows for (j,k)
// and (k,j) sum to zero, so the alternation cannot leave epsilon = 0 there.
Matrix initial_utility(const DecisionDataset& d, kernels::Execution exec) {
  LinearProgram lp;
  const std::size_t cells = d.num_states() * d.num_actions();
  for (std::size_t i = 0; i < cells; ++i) lp.add_variable(kPositiveFloor, 1.0);
  const std::size_t eps = lp.add_variable(0.0, 1.0, 1.0, "epsilon");
  for (std::size_t k = 0; k < d.num_agents(); ++k) {
    const JointPosterior jp = joint_and_posterior(d, k);
    for (std::size_t a = 0; a < d.num_actions(); ++a) {
      if (!jp.posterior[a]) continue;
      for (std::size_t b = 0; b < d.num_actions(); ++b) {
        if (b == a) continue;
        std::vector<LinearProgram::Term> terms;
        for (std::size_t x = 0; x < d.num_states(); ++x) {
          const double w = (*jp.posterior[a])(static_cast<Eigen::Index>(x));
          if (w == 0.0) continue;
          terms.push_back({x * d.num_actions() + b, w});
          terms.push_back({x * d.num_actions() + a, -w});
        }
        terms.push_back({eps, 1.0});
        lp.add_constraint(std::move(terms), 0.0);
      }
    }
  }
  const LpSolution sol = solve_or_throw(lp, exec, "initial utility program");
  Matrix u(d.num_states(), d.num_actions());
  for (std::size_t x = 0; x < d.num_states(); ++x) {
    for (std::size_t a = 0; a < d.num_actions(); ++a) {
      u(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(a)) = sol.point[x * d.num_actions() + a];
    }
  }
  return u;
}

// (c, w = 1/lambda) feasibility at fixed u and epsilon:
//   c_j - c_k - w_k (D_jk + epsilon) >= 0,  D_jk = F_j - F_k.
std::optional<Step> sensitivity_feasible(const DecisionDataset& d, const Matrix& u,
                                         const std::vector<double>& realized, double epsilon,
                                         const SbrpOptions& options) {
  const std::size_t n = d.num_agents();
  LinearProgram lp;
  for (std::size_t k = 0; k < n; ++k) lp.add_variable(kPositiveFloor, 1.0);
  for (std::size_t k = 0; k < n; ++k) {
    lp.add_variable(1.0 / options.lambda_max, 1.0 / options.lambda_min);
  }
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t k = 0; k < n; ++k) {
      if (j == k) continue;
      lp.add_constraint({{k, 1.0}, {j, -1.0}, {n + k, realized[j] - realized[k] + epsilon}}, 0.0);
    }
  }
  SimplexOptions so;
  so.execution = options.execution;
  const LpSolution sol = solve_lp(lp, so);
  if (sol.status != LpStatus::Optimal) return std::nullopt;
  // The LP tolerance applies to rows divided by lambda_k; re-check the
  // undivided rows and report the margin they actually achieve. Binding rows
  // land on -epsilon only up to rounding, hence the small allowance.
  double worst = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t k = 0; k < n; ++k) {
      if (j == k) continue;
      worst = std::max(worst, realized[j] - realized[k] + (sol.point[k] - sol.point[j]) / sol.point[n + k]);
    }
  }
  if (worst > -epsilon + kCertificateTol) return std::nullopt;
  Step out;
  out.utility = u;
  out.epsilon = std::min(epsilon, -worst);
  for (std::size_t k = 0; k < n; ++k) {
    out.costs.push_back(sol.point[k]);
    out.lambda.push_back(1.0 / sol.point[n + k]);
  }
  return out;
}

// Maximizes epsilon over (lambda, c) with u fixed. Feasibility is monotone in
// epsilon, so bisection on epsilon is exact up to its tolerance. The
// action-switch rows do not involve (lambda, c) and only cap epsilon.
// For a fresh start (no costs yet) the result may have a negative margin;
// nullopt means the start violates an action-switch row.
std::optional<Step> solve_sensitivity_step(const DecisionDataset& d, const Step& incumbent,
                                           const SbrpOptions& options) {
  const std::size_t n = d.num_agents();
  const double nias_worst = nias_residuals(d, std::vector<Matrix>(n, incumbent.utility)).max_strict();
  if (incumbent.costs.empty() && nias_worst > 0.0) return std::nullopt;
  const double cap = std::isfinite(nias_worst) ? std::clamp(-nias_worst, 0.0, 1.0) : 1.0;
  std::vector<double> realized(n);
  for (std::size_t k = 0; k < n; ++k) realized[k] = realized_value(d, k, incumbent.utility);

  if (auto top = sensitivity_feasible(d, incumbent.utility, realized, cap, options)) return *top;
  Step best = incumbent;
  double lo = std::max(0.0, incumbent.epsilon);
  if (incumbent.costs.empty()) {
    // A fresh start may admit no sensitivities at zero margin. The search
    // then runs over negative margins too: equal costs with the largest 1/lambda
    // are feasible at -max D, and the resulting lambda still seeds the next
    // utility step.
    double worst_gap = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t k = 0; k < n; ++k) worst_gap = std::max(worst_gap, realized[j] - realized[k]);
    }
    lo = -worst_gap - 1e-6;
    auto base = sensitivity_feasible(d, incumbent.utility, realized, lo, options);
    if (!base) return std::nullopt;
    best = *base;
  }
  double hi = cap;
  while (hi - lo > 1e-10 * std::max(1.0, hi)) {
    const double mid = 0.5 * (lo + hi);
    if (auto s = sensitivity_feasible(d, incumbent.utility, realized, mid, options)) {
      if (s->epsilon > best.epsilon) best = *s;
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return best;
}

double shared_norm2(const Matrix& u) { return u.squaredNorm(); }

}  // namespace

SbrpResiduals sbrp_residuals(const DecisionDataset& d, const SharedUtilitySolution& sol) {
  check_solution_shape(d, sol.utility, sol.sensitivities, sol.costs, ErrorCode::DimensionMismatch);
  const std::size_t n = d.num_agents();
  SbrpResiduals r{nias_residuals(d, std::vector<Matrix>(n, sol.utility)),
                  Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n))};
  std::vector<double> realized(n);
  for (std::size_t k = 0; k < n; ++k) realized[k] = realized_value(d, k, sol.utility);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t k = 0; k < n; ++k) {
      r.coupling(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k)) =
          realized[j] - realized[k] + sol.sensitivities[k] * (sol.costs[k] - sol.costs[j]);
    }
  }
  return r;
}

double max_strict_residual(const SbrpResiduals& r) {
  return std::max(r.nias.max_strict(), max_off_diagonal(r.coupling));
}

SharedUtilitySolution make_shared_solution(const DecisionDataset& d, Matrix utility,
                                           std::vector<double> sensitivities,
                                           std::vector<double> costs) {
  check_solution_shape(d, utility, sensitivities, costs, ErrorCode::ProfileMismatch);
  if (!utility.allFinite()) throw Error(ErrorCode::InvalidArgument, "utility has non-finite entries");
  for (double l : sensitivities) {
    if (!(l > 0.0) || !std::isfinite(l)) {
      throw Error(ErrorCode::InvalidArgument, "sensitivities must be positive");
    }
  }
  for (double c : costs) {
    if (!std::isfinite(c)) throw Error(ErrorCode::InvalidArgument, "non-finite cost");
  }
  SharedUtilitySolution s{std::move(utility), std::move(sensitivities), std::move(costs), 0.0};
  const double worst = max_strict_residual(sbrp_residuals(d, s));
  if (worst > kCertificateTol) {
    throw Error(ErrorCode::InvalidArgument,
                "solution violates a strict inequality by " + std::to_string(worst));
  }
  s.margin = std::max(0.0, -worst);
  return s;
}

SbrpFit sbrp_max_margin(const DecisionDataset& d, const SbrpOptions& options) {
  if (!(options.lambda_min > 0.0) || options.lambda_min > 1.0 || options.lambda_max < 1.0) {
    throw Error(ErrorCode::InvalidArgument, "sensitivity box must contain 1 and stay positive");
  }
  SbrpFit fit;
  const std::vector<double> ones(d.num_agents(), 1.0);
  if (options.fix_sensitivities) {
    const Step only = solve_utility_step(d, ones, options.execution);
    fit.step_epsilon.push_back(only.epsilon);
    fit.epsilon_history.push_back(only.epsilon);
    fit.rounds = 1;
    fit.solution = make_shared_solution(d, only.utility, only.lambda, only.costs);
    fit.epsilon_star = std::max(0.0, only.epsilon);
  } else {
    // The bilinear program has poor stationary points, so the loop starts from
    // the best of several shared utilities: the action-switch maximizer, each
    // per-agent utility of the multi-utility fit, and their mean. Candidates
    // violating an action-switch row drop out. The first sensitivity step may
    // end below zero; the utility step after it is always at least zero.
    std::vector<Matrix> candidates{initial_utility(d, options.execution)};
    BrpOptions bo;
    bo.execution = options.execution;
    const BrpFit multi = brp_max_margin(d, bo);
    if (!multi.report.degenerate) {
      Matrix mean = Matrix::Zero(candidates[0].rows(), candidates[0].cols());
      for (const Matrix& u : multi.profile.utilities) {
        candidates.push_back(u);
        mean += u / static_cast<double>(multi.profile.utilities.size());
      }
      candidates.push_back(mean);
    }
    std::optional<Step> first;
    for (const Matrix& u : candidates) {
      Step start;
      start.utility = u;
      std::optional<Step> s = solve_sensitivity_step(d, start, options);
      if (s && (!first || s->epsilon > first->epsilon)) first = std::move(s);
    }
    Step best = first ? *first : solve_utility_step(d, ones, options.execution);
    fit.step_epsilon.push_back(best.epsilon);
    fit.epsilon_history.push_back(best.epsilon);
    fit.rounds = 1;
    while (fit.rounds < options.max_rounds) {
      const double before = best.epsilon;
      const Step by_utility = solve_utility_step(d, best.lambda, options.execution);
      fit.step_epsilon.push_back(by_utility.epsilon);
      if (by_utility.epsilon > best.epsilon) best = by_utility;
      fit.epsilon_history.push_back(best.epsilon);
      const Step by_lambda = *solve_sensitivity_step(d, best, options);
      fit.step_epsilon.push_back(by_lambda.epsilon);
      if (by_lambda.epsilon > best.epsilon) best = by_lambda;
      fit.epsilon_history.push_back(best.epsilon);
      ++fit.rounds;
      if (best.epsilon - before < options.tolerance) break;
    }
    if (best.epsilon < 0.0) best = solve_utility_step(d, ones, options.execution);
    fit.solution = make_shared_solution(d, best.utility, best.lambda, best.costs);
    fit.epsilon_star = std::max(0.0, best.epsilon);
  }
  const double norm2 = shared_norm2(fit.solution.utility);
  fit.robustness = norm2 > 0.0 ? fit.epsilon_star / norm2 : 0.0;
  fit.degenerate = fit.epsilon_star <= kDegeneracyTol;
  // No negative zeros in output.
  for (double& e : fit.epsilon_history) e += 0.0;
  for (double& e : fit.step_epsilon) e += 0.0;
  return fit;
}

SharedUtilitySolution sbrp_sparsest_raw(const DecisionDataset& d, const SbrpFit& max_margin,
                                        double margin_fraction, const SbrpOptions& options) {
  if (!(margin_fraction > 0.0 && margin_fraction < 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "margin_fraction must lie in (0,1)");
  }
  if (max_margin.degenerate) {
    throw Error(ErrorCode::DegenerateDataset,
                "max margin " + std::to_string(max_margin.epsilon_star) +
                    " leaves sparsity undefined");
  }
  const auto& lambda = max_margin.solution.sensitivities;
  SharedProgram program(d, lambda, margin_fraction * max_margin.epsilon_star);
  for (std::size_t x = 0; x < d.num_states(); ++x) {
    for (std::size_t a = 0; a < d.num_actions(); ++a) program.lp().set_objective(program.u_var(x, a), -1.0);
  }
  const LpSolution sol = solve_or_throw(program.lp(), options.execution, "sparsity program");
  const Matrix u = symmetrize(program.utility(sol.point), simultaneous_symmetries(d));
  return make_shared_solution(d, u, lambda, program.costs(sol.point));
}

SharedUtilitySolution sbrp_sparsest(const DecisionDataset& d, const SbrpFit& max_margin,
                                    double margin_fraction, const SbrpOptions& options) {
  const SharedUtilitySolution raw = sbrp_sparsest_raw(d, max_margin, margin_fraction, options);
  return scale_solution(raw, 1.0 / std::sqrt(shared_norm2(raw.utility)));
}

SharedUtilitySolution sbrp_sparsest(const DecisionDataset& d, double margin_fraction,
                                    const SbrpOptions& options) {
  return sbrp_sparsest(d, sbrp_max_margin(d, options), margin_fraction, options);
}

SharedUtilitySolution scale_solution(const SharedUtilitySolution& s, double t) {
  if (!(t > 0.0) || !std::isfinite(t)) throw Error(ErrorCode::InvalidArgument, "scale must be positive");
  SharedUtilitySolution out = s;
  out.utility *= t;
  for (double& c : out.costs) c *= t;
  out.margin *= t;
  return out;
}

UtilityProfile to_utility_profile(const DecisionDataset& d, const SharedUtilitySolution& s) {
  return make_profile(d, std::vector<Matrix>(d.num_agents(), s.utility), s.costs);
}

PiecewiseAffineCost reconstruct_cost_compact(const DecisionDataset& d,
                                             const SharedUtilitySolution& sol) {
  check_solution_shape(d, sol.utility, sol.sensitivities, sol.costs, ErrorCode::ProfileMismatch);
  std::vector<CostPiece> pieces;
  const Matrix weighted = d.prior().asDiagonal() * sol.utility;
  for (std::size_t k = 0; k < d.num_agents(); ++k) {
    if (!(sol.sensitivities[k] > 0.0)) throw Error(ErrorCode::ProfileMismatch, "non-positive sensitivity");
    pieces.push_back(CostPiece{sol.costs[k], d.choice(k), weighted / sol.sensitivities[k]});
  }
  return PiecewiseAffineCost(std::move(pieces));
}

}  // namespace umri
