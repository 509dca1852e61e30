#pragma once

#include <cstddef>
#include <vector>

#include "umri/brp.hpp"
#include "umri/cost.hpp"
#include "umri/dataset.hpp"
#include "umri/kernels.hpp"
#include "umri/types.hpp"

namespace umri {

/// One utility shared by every agent, with per-agent cost sensitivities
/// lambda_k and costs c_k; a certificate for the single-utility test.
struct SharedUtilitySolution {
  Matrix utility;
  std::vector<double> sensitivities;
  std::vector<double> costs;
  double margin = 0.0;
};

/// Builds a solution and computes its margin. Throws Error{ProfileMismatch} on
/// shape mismatch and Error{InvalidArgument} on a positive strict residual or
/// a non-positive sensitivity.
SharedUtilitySolution make_shared_solution(const DecisionDataset& d, Matrix utility,
                                           std::vector<double> sensitivities,
                                           std::vector<double> costs);

struct SbrpResiduals {
  NiasResiduals nias;
  /// coupling(j,k) = Sum_{x,a} (p_j(x,a) - p_k(x,a)) u(x,a) + lambda_k (c_k - c_j)
  Matrix coupling;
};

/// Throws Error{DimensionMismatch}.
SbrpResiduals sbrp_residuals(const DecisionDataset& d, const SharedUtilitySolution& sol);

/// Largest strict residual of either family; -inf if there is none.
double max_strict_residual(const SbrpResiduals& r);

struct SbrpOptions {
  std::size_t max_rounds = 50;
  double tolerance = 1e-8;
  double lambda_min = 1e-3;
  double lambda_max = 1e3;
  /// Keep lambda = 1 and solve only the (u, c) program.
  bool fix_sensitivities = false;
  kernels::Execution execution = kernels::Execution::Parallel;
};

struct SbrpFit {
  SharedUtilitySolution solution;
  double epsilon_star = 0.0;
  double robustness = 0.0;  ///< epsilon* / ||u||_F^2
  bool degenerate = true;
  /// Margin of the incumbent after every step, in order.
  std::vector<double> epsilon_history;
  /// Margin each step reached on its own. A step starts from the incumbent,
  /// so it falls short of the previous history entry only by solver tolerance.
  std::vector<double> step_epsilon;
  std::size_t rounds = 0;
};

/// Maximizes the margin by alternating a (u, c, epsilon) LP at fixed lambda
/// with a (c, lambda, epsilon) step at fixed u. The latter is linear in
/// (c, 1/lambda) for fixed epsilon and is solved exactly by bisection.
///
/// At lambda = 1 the (j,k) and (k,j) coupling rows cancel, pinning epsilon to
/// 0, so the loop starts from the shared utility that maximizes the
/// action-switch margin alone and optimizes lambda first. Each step keeps the
/// incumbent feasible, so the margin never decreases.
SbrpFit sbrp_max_margin(const DecisionDataset& d, const SbrpOptions& options = {});

/// Minimum-L1 shared utility at the max-margin lambda with every strict
/// residual <= -f epsilon*, rescaled so ||u||_F = 1.
/// Throws Error{DegenerateDataset} when epsilon* <= kDegeneracyTol.
SharedUtilitySolution sbrp_sparsest(const DecisionDataset& d,
                                    double margin_fraction = kDefaultMarginFraction,
                                    const SbrpOptions& options = {});
SharedUtilitySolution sbrp_sparsest(const DecisionDataset& d, const SbrpFit& max_margin,
                                    double margin_fraction = kDefaultMarginFraction,
                                    const SbrpOptions& options = {});
/// The sparse program's optimum before rescaling.
SharedUtilitySolution sbrp_sparsest_raw(const DecisionDataset& d, const SbrpFit& max_margin,
                                        double margin_fraction = kDefaultMarginFraction,
                                        const SbrpOptions& options = {});

/// Scales utility, costs and margin by t > 0; sensitivities are unchanged.
SharedUtilitySolution scale_solution(const SharedUtilitySolution& s, double t);

/// Copies u into every agent's slot. With lambda = 1 the result is a
/// multi-utility certificate whose margin is at least s.margin.
UtilityProfile to_utility_profile(const DecisionDataset& d, const SharedUtilitySolution& s);

/// Cost with pieces (c_k, p_k, prior (x) u / lambda_k), so that C(p_k) = c_k.
/// Throws Error{ProfileMismatch}.
PiecewiseAffineCost reconstruct_cost_compact(const DecisionDataset& d,
                                             const SharedUtilitySolution& sol);

}  // namespace umri
