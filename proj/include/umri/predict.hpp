#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "umri/brp.hpp"
#include "umri/cost.hpp"
#include "umri/dataset.hpp"
#include "umri/types.hpp"

namespace umri {

/// Agents indexed by an increasing noise level, with the fitted model.
struct NoiseFamily {
  std::vector<double> etas;
  DecisionDataset dataset;
  UtilityProfile fitted;
  PiecewiseAffineCost cost;
  double epsilon_star = 0.0;
};

/// eta_k = 1 + 0.1 k for k = 0..count-1.
std::vector<double> default_etas(std::size_t count);

/// Fits the max-margin profile and builds the cost from per-agent pieces.
/// Throws Error{InvalidArgument} unless etas are strictly increasing with one
/// per agent, and Error{DegenerateDataset} when the margin is zero.
NoiseFamily fit_family(const DecisionDataset& d, std::vector<double> etas,
                       const BrpOptions& options = {});

struct Bracket {
  std::size_t lower = 0;  ///< g with etas[g] <= eta <= etas[g+1]
  double weight_lower = 1.0;
  double weight_upper = 0.0;
};

/// Throws Error{OutOfRange} outside [etas.front(), etas.back()].
Bracket locate(const std::vector<double>& etas, double eta);

/// Linear interpolation of the fitted utilities between the bracketing etas.
Matrix interpolate_utility(const NoiseFamily& f, double eta);

struct ChoicePrediction {
  Matrix choice;
  bool nias_consistent = false;
  double objective = 0.0;
};

/// Maximizes Sum_{x,a} prior(x) p(a|x) u_hat(x,a) - C(p) over stochastic p,
/// with C the affine-piece form of the cost, as one LP. When `anchor` is
/// given, a second LP picks the optimal p closest to it in L1, which makes
/// the answer unique when the optimum is a face rather than a vertex.
/// Throws Error{DimensionMismatch} or Error{NumericalFailure}.
ChoicePrediction predict_choice(const Vector& prior, const PiecewiseAffineCost& cost,
                                const Matrix& u_hat, const std::optional<Matrix>& anchor = {});

/// Same, over the family's prior and cost.
ChoicePrediction predict_choice(const NoiseFamily& f, const Matrix& u_hat,
                                const std::optional<Matrix>& anchor = {});

struct PredictionScore {
  Vector delta;  ///< |p_hat(x|x) - truth(x|x)| per class
  double kl = 0.0;
};

/// Per-class diagonal error and prior-weighted conditional KL(truth || p_hat),
/// with p_hat floored at 1e-12 inside the log.
/// Throws Error{ShapeMismatch} or Error{NonSquare}.
PredictionScore score_prediction(const Matrix& predicted, const Matrix& truth, const Vector& prior);

struct PredictionOutcome {
  double eta = 0.0;
  Matrix interpolated_utility;
  Matrix predicted_choice;
  bool nias_consistent = false;
  std::optional<PredictionScore> score;
};

/// interpolate_utility + predict_choice, scored when `truth` is given.
PredictionOutcome predict_at(const NoiseFamily& f, double eta,
                             const std::optional<Matrix>& truth = {});

}  // namespace umri
