#include "umri/predict.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "umri/error.hpp"
#include "umri/lp.hpp"

namespace umri {

namespace {

Eigen::Index idx(std::size_t i) { return static_cast<Eigen::Index>(i); }

bool nias_holds(const Vector& prior, const Matrix& p, const Matrix& u) {
  const Matrix joint = prior.asDiagonal() * p;
  for (Eigen::Index a = 0; a < joint.cols(); ++a) {
    const double mass = joint.col(a).sum();
    if (mass <= 1e-12) continue;
    const Vector s = u.transpose() * (joint.col(a) / mass);
    if ((s.array() - s(a)).maxCoeff() > 1e-9) return false;
  }
  return true;
}

}  // namespace

std::vector<double> default_etas(std::size_t count) {
  std::vector<double> out;
  for (std::size_t k = 0; k < count; ++k) out.push_back(1.0 + 0.1 * static_cast<double>(k));
  return out;
}

NoiseFamily fit_family(const DecisionDataset& d, std::vector<double> etas, const BrpOptions& options) {
  if (etas.size() != d.num_agents()) {
    throw Error(ErrorCode::InvalidArgument, "need one eta per agent, got " +
                                                std::to_string(etas.size()) + " for " +
                                                std::to_string(d.num_agents()));
  }
  for (std::size_t k = 0; k < etas.size(); ++k) {
    if (!std::isfinite(etas[k]) || (k > 0 && !(etas[k] > etas[k - 1]))) {
      throw Error(ErrorCode::InvalidArgument, "etas must be finite and strictly increasing");
    }
  }
  BrpFit fit = brp_max_margin(d, options);
  if (fit.report.degenerate) {
    throw Error(ErrorCode::DegenerateDataset, "family has zero margin; prediction is undefined");
  }
  PiecewiseAffineCost cost = reconstruct_cost(d, fit.profile);
  return NoiseFamily{std::move(etas), d, std::move(fit.profile), std::move(cost),
                     fit.report.epsilon_star};
}

Bracket locate(const std::vector<double>& etas, double eta) {
  if (etas.size() < 2) throw Error(ErrorCode::InvalidArgument, "need at least two etas");
  if (!(eta >= etas.front() && eta <= etas.back())) {
    throw Error(ErrorCode::OutOfRange, "eta " + std::to_string(eta) + " outside [" +
                                           std::to_string(etas.front()) + ", " +
                                           std::to_string(etas.back()) + "]");
  }
  const auto it = std::upper_bound(etas.begin(), etas.end(), eta);
  std::size_t g = static_cast<std::size_t>(it - etas.begin()) - 1;
  g = std::min(g, etas.size() - 2);
  Bracket b;
  b.lower = g;
  b.weight_upper = (eta - etas[g]) / (etas[g + 1] - etas[g]);
  b.weight_lower = 1.0 - b.weight_upper;
  return b;
}

Matrix interpolate_utility(const NoiseFamily& f, double eta) {
  const Bracket b = locate(f.etas, eta);
  if (b.weight_upper == 0.0) return f.fitted.utilities[b.lower];
  if (b.weight_lower == 0.0) return f.fitted.utilities[b.lower + 1];
  return b.weight_lower * f.fitted.utilities[b.lower] + b.weight_upper * f.fitted.utilities[b.lower + 1];
}

ChoicePrediction predict_choice(const Vector& prior, const PiecewiseAffineCost& cost,
                                const Matrix& u_hat, const std::optional<Matrix>& anchor) {
  if (cost.size() == 0) throw Error(ErrorCode::InvalidArgument, "empty cost");
  const auto states = static_cast<std::size_t>(u_hat.rows());
  const auto actions = static_cast<std::size_t>(u_hat.cols());
  const Matrix& ref = cost.pieces().front().reference;
  if (static_cast<std::size_t>(prior.size()) != states || ref.rows() != u_hat.rows() ||
      ref.cols() != u_hat.cols()) {
    throw Error(ErrorCode::DimensionMismatch, "utility, prior and cost disagree on shape");
  }
  if (!u_hat.allFinite()) throw Error(ErrorCode::InvalidArgument, "utility has non-finite entries");
  if (anchor && (anchor->rows() != u_hat.rows() || anchor->cols() != u_hat.cols())) {
    throw Error(ErrorCode::DimensionMismatch, "anchor shape does not match utility");
  }

  double bound = 1.0;
  for (const CostPiece& piece : cost.pieces()) {
    bound = std::max(bound, std::abs(piece.offset) + 2.0 * piece.gradient.cwiseAbs().sum() + 1.0);
  }

  LinearProgram lp;
  auto var = [&](std::size_t x, std::size_t a) { return x * actions + a; };
  for (std::size_t x = 0; x < states; ++x) {
    for (std::size_t a = 0; a < actions; ++a) {
      lp.add_variable(0.0, 1.0, prior(idx(x)) * u_hat(idx(x), idx(a)));
    }
  }
  const std::size_t t = lp.add_variable(-bound, bound, -1.0, "t");
  for (std::size_t x = 0; x < states; ++x) {
    std::vector<LinearProgram::Term> up;
    std::vector<LinearProgram::Term> down;
    for (std::size_t a = 0; a < actions; ++a) {
      up.push_back({var(x, a), 1.0});
      down.push_back({var(x, a), -1.0});
    }
    lp.add_constraint(std::move(up), 1.0);
    lp.add_constraint(std::move(down), -1.0);
  }
  for (const CostPiece& piece : cost.pieces()) {
    // offset + <G, p - p_k> <= t
    std::vector<LinearProgram::Term> terms;
    for (std::size_t x = 0; x < states; ++x) {
      for (std::size_t a = 0; a < actions; ++a) {
        const double g = piece.gradient(idx(x), idx(a));
        if (g != 0.0) terms.push_back({var(x, a), g});
      }
    }
    terms.push_back({t, -1.0});
    lp.add_constraint(std::move(terms), piece.gradient.cwiseProduct(piece.reference).sum() - piece.offset);
  }

  LpSolution sol = solve_lp(lp);
  if (sol.status != LpStatus::Optimal) {
    throw Error(ErrorCode::NumericalFailure, "prediction program reported non-optimal status");
  }
  const double optimum = sol.objective_value;

  if (anchor) {
    // Keep the optimal value, then move as close to the anchor as possible.
    std::vector<LinearProgram::Term> keep;
    for (std::size_t j = 0; j <= t; ++j) {
      if (lp.objective()[j] != 0.0) keep.push_back({j, -lp.objective()[j]});
    }
    lp.add_constraint(std::move(keep), -optimum + 1e-9 * std::max(1.0, std::abs(optimum)));
    for (std::size_t j = 0; j <= t; ++j) lp.set_objective(j, 0.0);
    for (std::size_t x = 0; x < states; ++x) {
      for (std::size_t a = 0; a < actions; ++a) {
        const double target = (*anchor)(idx(x), idx(a));
        const std::size_t dev = lp.add_variable(0.0, 1.0, -1.0);
        lp.add_constraint({{var(x, a), 1.0}, {dev, -1.0}}, target);
        lp.add_constraint({{var(x, a), -1.0}, {dev, -1.0}}, -target);
      }
    }
    sol = solve_lp(lp);
    if (sol.status != LpStatus::Optimal) {
      throw Error(ErrorCode::NumericalFailure, "anchored prediction program reported non-optimal status");
    }
  }

  ChoicePrediction out;
  out.objective = optimum;
  out.choice.resize(idx(states), idx(actions));
  for (std::size_t x = 0; x < states; ++x) {
    for (std::size_t a = 0; a < actions; ++a) out.choice(idx(x), idx(a)) = sol.point[var(x, a)];
    out.choice.row(idx(x)) /= out.choice.row(idx(x)).sum();
  }
  out.nias_consistent = nias_holds(prior, out.choice, u_hat);
  return out;
}

ChoicePrediction predict_choice(const NoiseFamily& f, const Matrix& u_hat,
                                const std::optional<Matrix>& anchor) {
  return predict_choice(f.dataset.prior(), f.cost, u_hat, anchor);
}

PredictionScore score_prediction(const Matrix& predicted, const Matrix& truth, const Vector& prior) {
  if (predicted.rows() != truth.rows() || predicted.cols() != truth.cols() ||
      prior.size() != truth.rows()) {
    throw Error(ErrorCode::ShapeMismatch, "prediction, truth and prior disagree on shape");
  }
  if (truth.rows() != truth.cols()) {
    throw Error(ErrorCode::NonSquare, "per-class error needs as many actions as states");
  }
  PredictionScore s;
  s.delta = (predicted.diagonal() - truth.diagonal()).cwiseAbs();
  for (Eigen::Index x = 0; x < truth.rows(); ++x) {
    double row = 0.0;
    for (Eigen::Index a = 0; a < truth.cols(); ++a) {
      const double q = truth(x, a);
      if (q <= 0.0) continue;
      row += q * std::log(q / std::max(predicted(x, a), 1e-12));
    }
    s.kl += prior(x) * row;
  }
  s.kl = std::max(s.kl, 0.0);
  return s;
}

PredictionOutcome predict_at(const NoiseFamily& f, double eta, const std::optional<Matrix>& truth) {
  const Bracket b = locate(f.etas, eta);
  PredictionOutcome out;
  out.eta = eta;
  out.interpolated_utility = interpolate_utility(f, eta);
  const Matrix anchor = b.weight_lower * f.dataset.choice(b.lower) +
                        b.weight_upper * f.dataset.choice(b.lower + 1);
  const ChoicePrediction pred = predict_choice(f, out.interpolated_utility, anchor);
  out.predicted_choice = pred.choice;
  out.nias_consistent = pred.nias_consistent;
  if (truth) out.score = score_prediction(out.predicted_choice, *truth, f.dataset.prior());
  return out;
}

}  // namespace umri
