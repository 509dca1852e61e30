#include "umri/brp.hpp"

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

void check_profile_shape(const DecisionDataset& d, const std::vector<Matrix>& utilities,
                         const std::vector<double>& costs) {
  const std::size_t k = d.num_agents();
  if (utilities.size() != k || costs.size() != k) {
    throw Error(ErrorCode::ProfileMismatch,
                "profile has " + std::to_string(utilities.size()) + " utilities and " +
                    std::to_string(costs.size()) + " costs for " + std::to_string(k) + " agents");
  }
  for (const Matrix& u : utilities) {
    if (static_cast<std::size_t>(u.rows()) != d.num_states() ||
        static_cast<std::size_t>(u.cols()) != d.num_actions()) {
      throw Error(ErrorCode::ProfileMismatch, "utility shape does not match dataset");
    }
    if (!u.allFinite()) throw Error(ErrorCode::InvalidArgument, "utility has non-finite entries");
  }
  for (double c : costs) {
    if (!std::isfinite(c)) throw Error(ErrorCode::InvalidArgument, "non-finite cost");
  }
}

std::vector<Matrix> joints_of(const DecisionDataset& d) {
  std::vector<Matrix> out;
  out.reserve(d.num_agents());
  for (std::size_t k = 0; k < d.num_agents(); ++k) {
    out.push_back(d.prior().asDiagonal() * d.choice(k));
  }
  return out;
}

double profile_margin(const DecisionDataset& d, const std::vector<Matrix>& utilities,
                      const std::vector<double>& costs) {
  const double worst = std::max(nias_residuals(d, utilities).max_strict(),
                                max_off_diagonal(niac_residuals(d, utilities, costs)));
  if (worst > kCertificateTol) {
    throw Error(ErrorCode::InvalidArgument,
                "profile violates a strict inequality by " + std::to_string(worst));
  }
  return std::max(0.0, -worst);
}

// Variable layout shared by the max-margin and sparsity programs:
// u_k(x,a) for every agent, then c_k, then (optionally) epsilon.
class CycleCutProgram {
 public:
  CycleCutProgram(const DecisionDataset& d, std::optional<double> fixed_margin)
      : d_(d), fixed_margin_(fixed_margin), joints_(joints_of(d)) {
    const std::size_t k = d.num_agents();
    cells_ = d.num_states() * d.num_actions();
    for (std::size_t i = 0; i < k * cells_; ++i) lp_.add_variable(kPositiveFloor, 1.0);
    for (std::size_t i = 0; i < k; ++i) lp_.add_variable(kPositiveFloor, 1.0);
    if (!fixed_margin_) eps_ = lp_.add_variable(0.0, 1.0, 1.0, "epsilon");
    selections_.resize(k * k);
    add_nias_rows();
    for (std::size_t j = 0; j < k; ++j) {
      for (std::size_t kk = 0; kk < k; ++kk) {
        if (j == kk) continue;
        std::vector<std::size_t> identity(d.num_actions());
        for (std::size_t a = 0; a < identity.size(); ++a) identity[a] = a;
        add_cycle_cut(j, kk, identity);
      }
    }
  }

  LinearProgram& lp() { return lp_; }

  std::size_t u_var(std::size_t k, std::size_t x, std::size_t a) const {
    return k * cells_ + x * d_.num_actions() + a;
  }
  std::size_t c_var(std::size_t k) const { return d_.num_agents() * cells_ + k; }

  std::vector<Matrix> utilities(const std::vector<double>& z) const {
    std::vector<Matrix> out;
    for (std::size_t k = 0; k < d_.num_agents(); ++k) {
      Matrix u(d_.num_states(), d_.num_actions());
      for (std::size_t x = 0; x < d_.num_states(); ++x) {
        for (std::size_t a = 0; a < d_.num_actions(); ++a) {
          u(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(a)) = z[u_var(k, x, a)];
        }
      }
      out.push_back(std::move(u));
    }
    return out;
  }

  std::vector<double> costs(const std::vector<double>& z) const {
    std::vector<double> out;
    for (std::size_t k = 0; k < d_.num_agents(); ++k) out.push_back(z[c_var(k)]);
    return out;
  }

  double margin(const std::vector<double>& z) const {
    return fixed_margin_ ? *fixed_margin_ : z[eps_];
  }

  // Adds best-response cuts for every violated (j,k) pair; returns how many.
  std::size_t separate(const std::vector<double>& z, kernels::Execution exec) {
    const auto u = utilities(z);
    const auto c = costs(z);
    const double target = -margin(z);
    const Matrix g = kernels::cross_values(joints_, u, exec);
    const std::size_t n = d_.num_agents();
    std::size_t added = 0;
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t k = 0; k < n; ++k) {
        if (j == k) continue;
        const double f = joints_[k].cwiseProduct(u[k]).sum();
        const double r = g(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k)) - c[j] -
                         f + c[k];
        if (r <= target + kCertificateTol) continue;
        auto sel = best_responses(joints_[j], u[k]);
        const auto& existing = selections_[j * n + k];
        if (std::find(existing.begin(), existing.end(), sel) != existing.end()) continue;
        add_cycle_cut(j, k, sel);
        ++added;
      }
    }
    return added;
  }

 private:
  void add_margin_term(std::vector<LinearProgram::Term>& terms, double& rhs) const {
    if (fixed_margin_) {
      rhs = -*fixed_margin_;
    } else {
      terms.push_back({eps_, 1.0});
      rhs = 0.0;
    }
  }

  void add_nias_rows() {
    const std::size_t states = d_.num_states();
    const std::size_t actions = d_.num_actions();
    for (std::size_t k = 0; k < d_.num_agents(); ++k) {
      const JointPosterior jp = joint_and_posterior(d_, k);
      for (std::size_t a = 0; a < actions; ++a) {
        if (!jp.posterior[a]) continue;
        const Vector& q = *jp.posterior[a];
        for (std::size_t b = 0; b < actions; ++b) {
          if (b == a) continue;
          std::vector<LinearProgram::Term> terms;
          for (std::size_t x = 0; x < states; ++x) {
            const double w = q(static_cast<Eigen::Index>(x));
            if (w == 0.0) continue;
            terms.push_back({u_var(k, x, b), w});
            terms.push_back({u_var(k, x, a), -w});
          }
          double rhs = 0.0;
          add_margin_term(terms, rhs);
          lp_.add_constraint(std::move(terms), rhs);
        }
      }
    }
  }

  // Sum_a Sum_x p_j(x,a) u_k(x, sel(a)) - F(k) - c_j + c_k + eps <= 0.
  void add_cycle_cut(std::size_t j, std::size_t k, const std::vector<std::size_t>& sel) {
    const std::size_t states = d_.num_states();
    const std::size_t actions = d_.num_actions();
    Matrix coef = -joints_[k];
    for (std::size_t a = 0; a < actions; ++a) {
      for (std::size_t x = 0; x < states; ++x) {
        coef(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(sel[a])) +=
            joints_[j](static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(a));
      }
    }
    std::vector<LinearProgram::Term> terms;
    for (std::size_t x = 0; x < states; ++x) {
      for (std::size_t a = 0; a < actions; ++a) {
        const double w = coef(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(a));
        if (w != 0.0) terms.push_back({u_var(k, x, a), w});
      }
    }
    terms.push_back({c_var(j), -1.0});
    terms.push_back({c_var(k), 1.0});
    double rhs = 0.0;
    add_margin_term(terms, rhs);
    lp_.add_constraint(std::move(terms), rhs);
    selections_[j * d_.num_agents() + k].push_back(sel);
  }

  const DecisionDataset& d_;
  std::optional<double> fixed_margin_;
  std::vector<Matrix> joints_;
  std::size_t cells_ = 0;
  std::size_t eps_ = 0;
  LinearProgram lp_;
  std::vector<std::vector<std::vector<std::size_t>>> selections_;
};

struct CutSolve {
  std::vector<double> point;
  std::size_t rounds = 0;
  std::size_t iterations = 0;
};

CutSolve solve_with_cuts(CycleCutProgram& program, const BrpOptions& options) {
  SimplexOptions so;
  so.execution = options.execution;
  IncrementalSimplex solver(program.lp(), so);
  CutSolve out;
  for (;;) {
    const LpSolution sol = solver.solve();
    out.iterations += sol.iterations;
    ++out.rounds;
    if (sol.status != LpStatus::Optimal) {
      // Constant utilities with equal costs are always feasible, so this is a
      // solver defect rather than a property of the data.
      throw Error(ErrorCode::NumericalFailure, "margin program reported non-optimal status");
    }
    out.point = sol.point;
    if (program.separate(sol.point, options.execution) == 0) return out;
    if (out.rounds >= options.max_cut_rounds) {
      throw Error(ErrorCode::NumericalFailure, "cycle-cut loop did not converge");
    }
  }
}

}  // namespace

UtilityProfile make_profile(const DecisionDataset& d, std::vector<Matrix> utilities,
                            std::vector<double> costs) {
  check_profile_shape(d, utilities, costs);
  UtilityProfile p;
  p.margin = profile_margin(d, utilities, costs);
  p.utilities = std::move(utilities);
  p.costs = std::move(costs);
  return p;
}

UtilityProfile scale_profile(const UtilityProfile& p, double t) {
  if (!(t > 0.0) || !std::isfinite(t)) throw Error(ErrorCode::InvalidArgument, "scale must be positive");
  UtilityProfile out = p;
  for (Matrix& u : out.utilities) u *= t;
  for (double& c : out.costs) c *= t;
  out.margin *= t;
  return out;
}

UtilityProfile normalize_profile(const UtilityProfile& p) {
  double total = 0.0;
  for (const Matrix& u : p.utilities) total += u.squaredNorm();
  if (total <= 0.0) throw Error(ErrorCode::InvalidArgument, "zero utility profile");
  return scale_profile(p, std::sqrt(static_cast<double>(p.utilities.size()) / total));
}

double robustness(const UtilityProfile& p) {
  double total = 0.0;
  for (const Matrix& u : p.utilities) total += u.squaredNorm();
  if (total <= 0.0) return 0.0;
  return p.margin * static_cast<double>(p.utilities.size()) / total;
}

NiasResiduals::NiasResiduals(std::size_t agents, std::size_t actions)
    : agents_(agents),
      actions_(actions),
      values_(agents * actions * actions, 0.0),
      defined_(agents * actions, 0) {}

double NiasResiduals::operator()(std::size_t k, std::size_t a, std::size_t b) const {
  return values_[(k * actions_ + a) * actions_ + b];
}

double& NiasResiduals::operator()(std::size_t k, std::size_t a, std::size_t b) {
  return values_[(k * actions_ + a) * actions_ + b];
}

double NiasResiduals::max_strict() const {
  double worst = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < agents_; ++k) {
    for (std::size_t a = 0; a < actions_; ++a) {
      if (!defined(k, a)) continue;
      for (std::size_t b = 0; b < actions_; ++b) {
        if (b != a) worst = std::max(worst, (*this)(k, a, b));
      }
    }
  }
  return worst;
}

NiasResiduals nias_residuals(const DecisionDataset& d, const std::vector<Matrix>& utilities) {
  if (utilities.size() != d.num_agents()) {
    throw Error(ErrorCode::DimensionMismatch, "need one utility per agent");
  }
  NiasResiduals out(d.num_agents(), d.num_actions());
  for (std::size_t k = 0; k < d.num_agents(); ++k) {
    const Matrix& u = utilities[k];
    if (static_cast<std::size_t>(u.rows()) != d.num_states() ||
        static_cast<std::size_t>(u.cols()) != d.num_actions()) {
      throw Error(ErrorCode::DimensionMismatch, "utility shape does not match dataset");
    }
    const JointPosterior jp = joint_and_posterior(d, k);
    for (std::size_t a = 0; a < d.num_actions(); ++a) {
      if (!jp.posterior[a]) continue;
      out.set_defined(k, a, true);
      const Vector s = u.transpose() * *jp.posterior[a];
      for (std::size_t b = 0; b < d.num_actions(); ++b) {
        out(k, a, b) = s(static_cast<Eigen::Index>(b)) - s(static_cast<Eigen::Index>(a));
      }
    }
  }
  return out;
}

Matrix niac_residuals(const DecisionDataset& d, const std::vector<Matrix>& utilities,
                      const std::vector<double>& costs, kernels::Execution exec) {
  if (utilities.size() != d.num_agents() || costs.size() != d.num_agents()) {
    throw Error(ErrorCode::DimensionMismatch, "need one utility and cost per agent");
  }
  for (const Matrix& u : utilities) {
    if (static_cast<std::size_t>(u.rows()) != d.num_states() ||
        static_cast<std::size_t>(u.cols()) != d.num_actions()) {
      throw Error(ErrorCode::DimensionMismatch, "utility shape does not match dataset");
    }
  }
  const auto joints = joints_of(d);
  Matrix r = kernels::cross_values(joints, utilities, exec);
  const auto n = static_cast<Eigen::Index>(d.num_agents());
  for (Eigen::Index k = 0; k < n; ++k) {
    const double f = joints[static_cast<std::size_t>(k)]
                         .cwiseProduct(utilities[static_cast<std::size_t>(k)])
                         .sum();
    for (Eigen::Index j = 0; j < n; ++j) {
      r(j, k) += -costs[static_cast<std::size_t>(j)] - f + costs[static_cast<std::size_t>(k)];
    }
  }
  return r;
}

double max_off_diagonal(const Matrix& m) {
  double worst = -std::numeric_limits<double>::infinity();
  for (Eigen::Index j = 0; j < m.rows(); ++j) {
    for (Eigen::Index k = 0; k < m.cols(); ++k) {
      if (j != k) worst = std::max(worst, m(j, k));
    }
  }
  return worst;
}

BrpFit brp_max_margin(const DecisionDataset& d, const BrpOptions& options) {
  CycleCutProgram program(d, std::nullopt);
  const CutSolve solved = solve_with_cuts(program, options);

  BrpFit fit;
  fit.cut_rounds = solved.rounds;
  fit.lp_iterations = solved.iterations;
  fit.profile = make_profile(d, program.utilities(solved.point), program.costs(solved.point));

  MarginReport& rep = fit.report;
  rep.epsilon_star = std::max(0.0, program.margin(solved.point));
  double total = 0.0;
  for (const Matrix& u : fit.profile.utilities) {
    rep.utility_norms.push_back(u.squaredNorm());
    total += rep.utility_norms.back();
  }
  rep.robustness = rep.epsilon_star * static_cast<double>(d.num_agents()) / total;
  rep.degenerate = rep.epsilon_star <= kDegeneracyTol;
  return fit;
}

UtilityProfile brp_sparsest_raw(const DecisionDataset& d, const BrpFit& max_margin,
                                double margin_fraction, const BrpOptions& options) {
  if (!(margin_fraction > 0.0 && margin_fraction < 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "margin_fraction must lie in (0,1)");
  }
  if (max_margin.report.degenerate) {
    throw Error(ErrorCode::DegenerateDataset,
                "max margin " + std::to_string(max_margin.report.epsilon_star) +
                    " leaves sparsity undefined");
  }
  CycleCutProgram program(d, margin_fraction * max_margin.report.epsilon_star);
  LinearProgram& lp = program.lp();
  for (std::size_t k = 0; k < d.num_agents(); ++k) {
    for (std::size_t x = 0; x < d.num_states(); ++x) {
      for (std::size_t a = 0; a < d.num_actions(); ++a) lp.set_objective(program.u_var(k, x, a), -1.0);
    }
  }
  const CutSolve solved = solve_with_cuts(program, options);
  // Averaging an optimum over the dataset's symmetries keeps it optimal and
  // feasible, and makes the returned vertex choice symmetry-consistent.
  const auto perms = simultaneous_symmetries(d);
  std::vector<Matrix> utilities = program.utilities(solved.point);
  for (Matrix& u : utilities) u = symmetrize(u, perms);
  return make_profile(d, std::move(utilities), program.costs(solved.point));
}

UtilityProfile brp_sparsest(const DecisionDataset& d, const BrpFit& max_margin,
                            double margin_fraction, const BrpOptions& options) {
  return normalize_profile(brp_sparsest_raw(d, max_margin, margin_fraction, options));
}

UtilityProfile brp_sparsest(const DecisionDataset& d, double margin_fraction,
                            const BrpOptions& options) {
  return brp_sparsest(d, brp_max_margin(d, options), margin_fraction, options);
}

PiecewiseAffineCost reconstruct_cost(const DecisionDataset& d, const UtilityProfile& prof) {
  check_profile_shape(d, prof.utilities, prof.costs);
  std::vector<CostPiece> pieces;
  for (std::size_t k = 0; k < d.num_agents(); ++k) {
    pieces.push_back(CostPiece{prof.costs[k], d.choice(k), d.prior().asDiagonal() * prof.utilities[k]});
  }
  return PiecewiseAffineCost(std::move(pieces));
}

}  // namespace umri
