#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "umri/dataset.hpp"
#include "umri/kernels.hpp"
#include "umri/types.hpp"

namespace umri {

using Rng = std::mt19937_64;

/// A generated dataset together with the parameters that rationalize it.
struct GroundTruth {
  DecisionDataset dataset;
  std::vector<Matrix> utilities;
  std::vector<double> costs;
  double construction_margin = 0.0;
  std::uint64_t seed = 0;
};

/// Strategy from Bayes-plausible posteriors: p(a|x) = Sum_i w_i q_i(x) / prior(x)
/// where posterior i is assigned to the action argmax_b Sum_x q_i(x) u(x,b)
/// (ties to the lowest b). Posteriors sharing an action are merged, so every
/// used action is optimal under its revealed posterior.
/// Throws Error{InvalidArgument} unless Sum_i w_i q_i = prior within 1e-9.
Matrix strategy_from_posteriors(const Vector& prior, const std::vector<Vector>& posteriors,
                                const std::vector<double>& weights, const Matrix& u);

/// Random strategy that satisfies the action-switch inequalities under u.
/// Draws a joint p(x,a) with Dirichlet(concentration) rows, whose columns are
/// Bayes-plausible posteriors, and relabels as above. With min_gap > 0 a draw
/// is kept only if every used action beats every alternative by min_gap under
/// its posterior. Throws Error{RejectionExhausted} after 1000 draws.
AgentChoiceMatrix generate_strategies(std::size_t num_states, std::size_t num_actions,
                                      const Vector& prior, const Matrix& u, Rng& rng,
                                      double min_gap = 0.0, double concentration = 0.5);

/// Costs with every attention-cycle residual <= -margin, from shortest-path
/// potentials on the complete digraph with w(j->k) = F(k) - G(j,k) - margin.
/// Potentials are shifted so the smallest cost is 0.05.
/// Throws Error{NegativeCycle} when no such costs exist, and
/// Error{CostRangeExceeded} when they would not fit in (0, 1].
std::vector<double> assign_costs(const Matrix& cross_values, const Vector& realized, double margin);

/// Dataset form; re-verifies the residuals before returning.
std::vector<double> assign_costs(const DecisionDataset& d, const std::vector<Matrix>& utilities,
                                 double margin);

/// K agents of increasing informativeness and stakes whose residuals are all
/// <= -margin at the generator's own parameters.
/// Throws Error{RejectionExhausted}.
GroundTruth generate_feasible_dataset(std::size_t agents, std::size_t num_states,
                                      std::size_t num_actions, double margin, std::uint64_t seed);

/// Shared utility, costs c_k = J(p_k, u) - v, and strategies listed from most
/// garbled to least; all residuals are zero at these parameters.
/// Throws Error{InvalidArgument} on inconsistent shapes.
GroundTruth boundary_from_chain(const Vector& prior, const Matrix& u,
                                const std::vector<Matrix>& strategies, std::uint64_t seed = 0);

/// Random Blackwell chain p_k = relabel(p_{k+1} B_k) under one shared utility.
GroundTruth generate_boundary_dataset(std::size_t agents, std::size_t num_states,
                                      std::size_t num_actions, std::uint64_t seed);

/// Row-stochastic matrix with Dirichlet(concentration) rows.
Matrix random_stochastic(std::size_t rows, std::size_t cols, Rng& rng, double concentration = 1.0);

struct GridOracleResult {
  bool feasible = false;
  double best_margin = 0.0;
  std::vector<Matrix> utilities;  ///< witness, empty when infeasible
  std::vector<double> costs;
  std::size_t combinations = 0;
};

/// Exhaustive search over utilities with entries on `levels`. Each
/// action-switch-consistent combination gets its exact attention-cycle margin
/// by bisection on negative-cycle existence, with costs kept in [1e-6, 1] and
/// the margin capped at 1 as in the linear program.
/// Throws Error{InstanceTooLarge} when |X||A|K > 20 or there are more than 1e7
/// combinations.
GridOracleResult grid_oracle(const DecisionDataset& d,
                             const std::vector<double>& levels = {0.25, 0.5, 0.75, 1.0},
                             kernels::Execution exec = kernels::Execution::Parallel);

/// One-parameter family of strategies indexed by a noise level: agents move
/// from near-diagonal choice toward the prior along a saturating curve in eta, with a smoothly
/// varying diagonal utility.
struct NoiseFamilyTruth {
  Vector prior;
  double eta_first = 1.0;
  double eta_last = 2.0;
  double spread_first = 0.1;  ///< mixing weight toward the prior at eta_first
  double spread_last = 0.5;
  Vector diag_first;
  Vector diag_last;

  double spread(double eta) const;
  Matrix strategy(double eta) const;
  Matrix utility(double eta) const;
};

NoiseFamilyTruth make_noise_family_truth(std::size_t num_states, double eta_first, double eta_last,
                                         std::uint64_t seed);

/// Dataset with one agent per eta, in order.
DecisionDataset sample_noise_family(const NoiseFamilyTruth& truth, const std::vector<double>& etas);

}  // namespace umri
