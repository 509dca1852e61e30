#pragma once

#include <cstddef>
#include <vector>

#include "umri/cost.hpp"
#include "umri/dataset.hpp"
#include "umri/kernels.hpp"
#include "umri/types.hpp"

namespace umri {

/// Per-agent utilities and costs; a certificate for the multi-utility test.
struct UtilityProfile {
  std::vector<Matrix> utilities;
  std::vector<double> costs;
  /// Negated largest strict-set residual, clamped at zero.
  double margin = 0.0;
};

/// Builds a profile and computes its margin from the residuals.
/// Throws Error{ProfileMismatch} on shape or count mismatch, and
/// Error{InvalidArgument} on non-finite entries or when some strict residual
/// is positive beyond 1e-9 (the pair is not a certificate).
UtilityProfile make_profile(const DecisionDataset& d, std::vector<Matrix> utilities,
                            std::vector<double> costs);

/// Scales every utility, cost and the margin by t > 0.
UtilityProfile scale_profile(const UtilityProfile& p, double t);

/// Rescales so that Sum_k ||u_k||_F^2 = K.
UtilityProfile normalize_profile(const UtilityProfile& p);

/// epsilon * K / Sum_k ||u_k||_F^2 for the profile as given.
double robustness(const UtilityProfile& p);

struct MarginReport {
  double epsilon_star = 0.0;
  double robustness = 0.0;
  std::vector<double> utility_norms;  ///< squared Frobenius norms
  bool degenerate = true;
};

/// Action-switch residuals r(k,a,b) = Sum_x p_k(x|a) (u_k(x,b) - u_k(x,a)).
/// Rows for actions an agent never chooses are absent.
class NiasResiduals {
 public:
  NiasResiduals(std::size_t agents, std::size_t actions);

  double operator()(std::size_t k, std::size_t a, std::size_t b) const;
  double& operator()(std::size_t k, std::size_t a, std::size_t b);
  bool defined(std::size_t k, std::size_t a) const { return defined_[k * actions_ + a] != 0; }
  void set_defined(std::size_t k, std::size_t a, bool on) { defined_[k * actions_ + a] = on; }

  std::size_t agents() const { return agents_; }
  std::size_t actions() const { return actions_; }

  /// Largest residual over defined rows and b != a; -inf if there are none.
  double max_strict() const;

 private:
  std::size_t agents_;
  std::size_t actions_;
  std::vector<double> values_;
  std::vector<char> defined_;
};

NiasResiduals nias_residuals(const DecisionDataset& d, const std::vector<Matrix>& utilities);

/// Attention-cycle residuals R(j,k) = G(j,k) - c_j - F(k) + c_k with
/// G(j,k) = expected_value(d, j, u_k) and F(k) = realized_value(d, k, u_k).
Matrix niac_residuals(const DecisionDataset& d, const std::vector<Matrix>& utilities,
                      const std::vector<double>& costs,
                      kernels::Execution exec = kernels::Execution::Parallel);

/// Largest NIAC residual over j != k; -inf for a single agent.
double max_off_diagonal(const Matrix& m);

struct BrpOptions {
  std::size_t max_cut_rounds = 200;
  kernels::Execution execution = kernels::Execution::Parallel;
};

struct BrpFit {
  UtilityProfile profile;
  MarginReport report;
  std::size_t cut_rounds = 0;
  std::size_t lp_iterations = 0;
};

/// Maximizes the uniform margin epsilon by which all strict action-switch and
/// attention-cycle inequalities hold, with utilities and costs boxed in
/// [kPositiveFloor, 1] and epsilon in [0, 1].
///
/// The max over actions inside G(j,k) is convex, so it enters the LP through
/// selection cuts: each (j,k) starts with the b = a selection and gains the
/// exact best-response selection whenever the current solution violates it.
/// The loop ends when no cycle residual exceeds -epsilon + 1e-9.
BrpFit brp_max_margin(const DecisionDataset& d, const BrpOptions& options = {});

/// Minimum-L1 utilities subject to all strict residuals <= -f epsilon*, then
/// rescaled so Sum_k ||u_k||_F^2 = K.
/// Throws Error{DegenerateDataset} when epsilon* <= kDegeneracyTol.
UtilityProfile brp_sparsest(const DecisionDataset& d, double margin_fraction = kDefaultMarginFraction,
                            const BrpOptions& options = {});

/// Same, reusing an already computed max-margin fit.
UtilityProfile brp_sparsest(const DecisionDataset& d, const BrpFit& max_margin,
                            double margin_fraction = kDefaultMarginFraction,
                            const BrpOptions& options = {});

/// The sparse program's optimum before rescaling. Its L1 norm is at most that
/// of the max-margin utilities, which are feasible for the same program.
UtilityProfile brp_sparsest_raw(const DecisionDataset& d, const BrpFit& max_margin,
                                double margin_fraction = kDefaultMarginFraction,
                                const BrpOptions& options = {});

/// Cost with pieces (c_k, p_k, prior (x) u_k). Throws Error{ProfileMismatch}.
PiecewiseAffineCost reconstruct_cost(const DecisionDataset& d, const UtilityProfile& prof);

}  // namespace umri
