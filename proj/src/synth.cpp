#include "umri/synth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <string>

#include <omp.h>

#include "umri/brp.hpp"
#include "umri/error.hpp"

namespace umri {

namespace {

constexpr std::size_t kMaxDraws = 1000;
constexpr double kCostFloor = 0.05;

Eigen::Index idx(std::size_t i) { return static_cast<Eigen::Index>(i); }

std::size_t best_action(const Vector& posterior, const Matrix& u) {
  const Vector s = u.transpose() * posterior;
  std::size_t best = 0;
  for (std::size_t b = 1; b < static_cast<std::size_t>(s.size()); ++b) {
    if (s(idx(b)) > s(idx(best))) best = b;
  }
  return best;
}

// Relabels each column of a joint to its best response under u and merges.
Matrix relabel_joint(const Matrix& joint, const Matrix& u) {
  Matrix out = Matrix::Zero(joint.rows(), u.cols());
  for (Eigen::Index a = 0; a < joint.cols(); ++a) {
    const double mass = joint.col(a).sum();
    if (mass <= 0.0) continue;
    const Vector q = joint.col(a) / mass;
    out.col(idx(best_action(q, u))) += joint.col(a);
  }
  return out;
}

Matrix joint_to_choice(const Matrix& joint, const Vector& prior) {
  Matrix p = prior.cwiseInverse().asDiagonal() * joint;
  for (Eigen::Index x = 0; x < p.rows(); ++x) p.row(x) /= p.row(x).sum();
  return p;
}

// Smallest best-minus-alternative gap over used actions, in posterior units.
double posterior_gap(const Matrix& joint, const Matrix& u) {
  double gap = std::numeric_limits<double>::infinity();
  for (Eigen::Index a = 0; a < joint.cols(); ++a) {
    const double mass = joint.col(a).sum();
    if (mass <= 0.0) continue;
    const Vector s = u.transpose() * (joint.col(a) / mass);
    for (Eigen::Index b = 0; b < s.size(); ++b) {
      if (b != a) gap = std::min(gap, s(a) - s(b));
    }
  }
  return gap;
}

double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

// Bellman-Ford from a virtual source joined to every node by a zero edge.
// weight(j, k) is the edge j -> k; returns nullopt on a negative cycle.
template <typename Weight>
std::optional<std::vector<double>> potentials(std::size_t n, Weight weight) {
  std::vector<double> dist(n, 0.0);
  for (std::size_t round = 0; round <= n; ++round) {
    bool changed = false;
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t k = 0; k < n; ++k) {
        if (j == k) continue;
        const double cand = dist[j] + weight(j, k);
        if (cand < dist[k] - 1e-13) {
          dist[k] = cand;
          changed = true;
        }
      }
    }
    if (!changed) return dist;
  }
  return std::nullopt;
}

}  // namespace

Matrix random_stochastic(std::size_t rows, std::size_t cols, Rng& rng, double concentration) {
  std::gamma_distribution<double> gamma(concentration, 1.0);
  Matrix m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    double sum = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      m(idx(r), idx(c)) = gamma(rng);
      sum += m(idx(r), idx(c));
    }
    if (sum <= 0.0) {
      m.row(idx(r)).setConstant(1.0 / static_cast<double>(cols));
    } else {
      m.row(idx(r)) /= sum;
    }
  }
  return m;
}

Matrix strategy_from_posteriors(const Vector& prior, const std::vector<Vector>& posteriors,
                                const std::vector<double>& weights, const Matrix& u) {
  if (posteriors.size() != weights.size() || posteriors.empty()) {
    throw Error(ErrorCode::InvalidArgument, "need one weight per posterior");
  }
  if (u.rows() != prior.size()) throw Error(ErrorCode::DimensionMismatch, "utility rows != states");
  if ((prior.array() <= 0.0).any()) throw Error(ErrorCode::InvalidArgument, "prior must be positive");
  Matrix joint(prior.size(), static_cast<Eigen::Index>(posteriors.size()));
  for (std::size_t i = 0; i < posteriors.size(); ++i) {
    if (posteriors[i].size() != prior.size() || weights[i] < 0.0) {
      throw Error(ErrorCode::InvalidArgument, "bad posterior or weight");
    }
    joint.col(idx(i)) = weights[i] * posteriors[i];
  }
  if ((joint.rowwise().sum() - prior).cwiseAbs().maxCoeff() > 1e-9) {
    throw Error(ErrorCode::InvalidArgument, "posteriors are not Bayes-plausible for the prior");
  }
  return joint_to_choice(relabel_joint(joint, u), prior);
}

AgentChoiceMatrix generate_strategies(std::size_t num_states, std::size_t num_actions,
                                      const Vector& prior, const Matrix& u, Rng& rng,
                                      double min_gap, double concentration) {
  if (static_cast<std::size_t>(prior.size()) != num_states ||
      static_cast<std::size_t>(u.rows()) != num_states ||
      static_cast<std::size_t>(u.cols()) != num_actions) {
    throw Error(ErrorCode::DimensionMismatch, "prior/utility shape does not match");
  }
  if ((prior.array() <= 0.0).any()) throw Error(ErrorCode::InvalidArgument, "prior must be positive");
  for (std::size_t draw = 0; draw < kMaxDraws; ++draw) {
    const Matrix raw = random_stochastic(num_states, num_actions, rng, concentration);
    const Matrix joint = relabel_joint(prior.asDiagonal() * raw, u);
    if (min_gap > 0.0 && posterior_gap(joint, u) < min_gap) continue;
    return AgentChoiceMatrix{{}, joint_to_choice(joint, prior)};
  }
  throw Error(ErrorCode::RejectionExhausted, "no strategy with the requested gap in 1000 draws");
}

std::vector<double> assign_costs(const Matrix& cross_values, const Vector& realized, double margin) {
  const auto n = static_cast<std::size_t>(realized.size());
  if (cross_values.rows() != realized.size() || cross_values.cols() != realized.size()) {
    throw Error(ErrorCode::DimensionMismatch, "cross-value matrix must be K x K");
  }
  const auto dist = potentials(n, [&](std::size_t j, std::size_t k) {
    return realized(idx(k)) - cross_values(idx(j), idx(k)) - margin;
  });
  if (!dist) {
    throw Error(ErrorCode::NegativeCycle,
                "no costs rationalize these utilities at margin " + std::to_string(margin));
  }
  const double lo = *std::min_element(dist->begin(), dist->end());
  std::vector<double> costs;
  for (double v : *dist) costs.push_back(v - lo + kCostFloor);
  const double hi = *std::max_element(costs.begin(), costs.end());
  if (hi > 1.0) {
    throw Error(ErrorCode::CostRangeExceeded, "costs span up to " + std::to_string(hi));
  }
  return costs;
}

std::vector<double> assign_costs(const DecisionDataset& d, const std::vector<Matrix>& utilities,
                                 double margin) {
  if (utilities.size() != d.num_agents()) {
    throw Error(ErrorCode::DimensionMismatch, "need one utility per agent");
  }
  const std::size_t n = d.num_agents();
  Matrix g(idx(n), idx(n));
  Vector f(idx(n));
  for (std::size_t k = 0; k < n; ++k) {
    f(idx(k)) = realized_value(d, k, utilities[k]);
    for (std::size_t j = 0; j < n; ++j) g(idx(j), idx(k)) = expected_value(d, j, utilities[k]);
  }
  std::vector<double> costs = assign_costs(g, f, margin);
  const double worst = max_off_diagonal(niac_residuals(d, utilities, costs));
  if (n > 1 && worst > -margin + 1e-9) {
    throw Error(ErrorCode::NumericalFailure, "assigned costs fail re-verification");
  }
  return costs;
}

GroundTruth generate_feasible_dataset(std::size_t agents, std::size_t num_states,
                                      std::size_t num_actions, double margin, std::uint64_t seed) {
  if (agents < 2) throw Error(ErrorCode::TooFewAgents, "need at least 2 agents");
  if (num_states == 0 || num_actions == 0) {
    throw Error(ErrorCode::DimensionMismatch, "empty state or action set");
  }
  if (!(margin >= 0.0)) throw Error(ErrorCode::InvalidArgument, "margin must be nonnegative");
  Rng rng(seed);
  // Agent k mixes a random low-information strategy with full information by
  // tau_k and scales a shared base utility by s_k, both increasing in k. For
  // j < k the two-cycle residual sum is about (s_k - s_j)(J_j - J_k) < 0, the
  // margin the cost potentials need.
  const double scale_lo = 0.1;
  const double scale_hi = 1.0;
  const double last = static_cast<double>(agents - 1);

  for (std::size_t attempt = 0; attempt < kMaxDraws; ++attempt) {
    Vector prior = random_stochastic(1, num_states, rng, 4.0).row(0).transpose();
    prior = (prior.array() + 0.5 / static_cast<double>(num_states)).matrix();
    prior /= prior.sum();

    // Base utility: one clearly best action per state.
    Matrix base(idx(num_states), idx(num_actions));
    Matrix sharp = Matrix::Zero(idx(num_states), idx(num_actions));
    for (std::size_t x = 0; x < num_states; ++x) {
      for (std::size_t a = 0; a < num_actions; ++a) base(idx(x), idx(a)) = uniform(rng, 0.0, 0.3);
      const std::size_t top = x % num_actions;
      base(idx(x), idx(top)) = uniform(rng, 0.85, 1.0);
      sharp(idx(x), idx(top)) = 1.0;
    }

    Matrix low;
    try {
      low = generate_strategies(num_states, num_actions, prior, base, rng,
                                margin / scale_lo + 0.02, 1.0).choice_prob;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::RejectionExhausted) throw;
      continue;
    }

    DatasetCandidate cand;
    cand.num_states = num_states;
    cand.num_actions = num_actions;
    cand.prior = prior;
    std::vector<Matrix> utilities;
    for (std::size_t k = 0; k < agents; ++k) {
      const double tau = static_cast<double>(k) / last;
      const double scale = scale_lo + (scale_hi - scale_lo) * tau * uniform(rng, 0.97, 1.0);
      cand.agents.push_back({std::to_string(k), (1.0 - tau) * low + tau * sharp});
      Matrix u = scale * base;
      for (Eigen::Index i = 0; i < u.size(); ++i) {
        u.data()[i] = std::clamp(u.data()[i] + uniform(rng, -1e-3, 1e-3), kPositiveFloor, 1.0);
      }
      utilities.push_back(std::move(u));
    }
    DecisionDataset d = validate_dataset(std::move(cand));
    if (nias_residuals(d, utilities).max_strict() > -margin) continue;
    try {
      std::vector<double> costs = assign_costs(d, utilities, margin);
      return GroundTruth{std::move(d), std::move(utilities), std::move(costs), margin, seed};
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NegativeCycle && e.code() != ErrorCode::CostRangeExceeded) throw;
    }
  }

  if (margin == 0.0) {
    // Constant utilities with equal costs rationalize anything at margin 0.
    Vector prior = Vector::Constant(idx(num_states), 1.0 / static_cast<double>(num_states));
    DatasetCandidate cand{num_states, num_actions, prior, {}, {}};
    Matrix flat = Matrix::Constant(idx(num_states), idx(num_actions), 1.0 / static_cast<double>(num_actions));
    for (std::size_t k = 0; k < agents; ++k) cand.agents.push_back({std::to_string(k), flat});
    return GroundTruth{validate_dataset(std::move(cand)),
                       std::vector<Matrix>(agents, Matrix::Constant(idx(num_states), idx(num_actions), 0.5)),
                       std::vector<double>(agents, kCostFloor), 0.0, seed};
  }
  throw Error(ErrorCode::RejectionExhausted,
              "no feasible dataset in 1000 attempts for seed " + std::to_string(seed));
}

GroundTruth boundary_from_chain(const Vector& prior, const Matrix& u,
                                const std::vector<Matrix>& strategies, std::uint64_t seed) {
  if (strategies.size() < 2) throw Error(ErrorCode::TooFewAgents, "need at least 2 agents");
  DatasetCandidate cand;
  cand.num_states = static_cast<std::size_t>(u.rows());
  cand.num_actions = static_cast<std::size_t>(u.cols());
  cand.prior = prior;
  for (std::size_t k = 0; k < strategies.size(); ++k) {
    if (strategies[k].rows() != u.rows() || strategies[k].cols() != u.cols()) {
      throw Error(ErrorCode::InvalidArgument, "strategy shape does not match utility");
    }
    cand.agents.push_back({std::to_string(k), strategies[k]});
  }
  DecisionDataset d = validate_dataset(std::move(cand));

  std::vector<double> values;
  for (std::size_t k = 0; k < d.num_agents(); ++k) values.push_back(expected_value(d, k, u));
  const double lo = *std::min_element(values.begin(), values.end());
  const double hi = *std::max_element(values.begin(), values.end());
  // Shrink u if the spread of values would push a cost above 1.
  const double t = hi - lo + kCostFloor > 1.0 ? (1.0 - kCostFloor) / (hi - lo) : 1.0;
  std::vector<double> costs;
  for (double v : values) costs.push_back(t * (v - lo) + kCostFloor);
  return GroundTruth{std::move(d), std::vector<Matrix>(strategies.size(), t * u), std::move(costs),
                     0.0, seed};
}

GroundTruth generate_boundary_dataset(std::size_t agents, std::size_t num_states,
                                      std::size_t num_actions, std::uint64_t seed) {
  if (agents < 2) throw Error(ErrorCode::TooFewAgents, "need at least 2 agents");
  if (num_states == 0 || num_actions == 0) {
    throw Error(ErrorCode::DimensionMismatch, "empty state or action set");
  }
  Rng rng(seed);
  Vector prior = random_stochastic(1, num_states, rng, 4.0).row(0).transpose();
  prior = (prior.array() + 0.5 / static_cast<double>(num_states)).matrix();
  prior /= prior.sum();
  Matrix u(idx(num_states), idx(num_actions));
  for (Eigen::Index i = 0; i < u.size(); ++i) u.data()[i] = uniform(rng, 0.05, 1.0);

  std::vector<Matrix> chain(agents);
  chain[agents - 1] = generate_strategies(num_states, num_actions, prior, u, rng).choice_prob;
  for (std::size_t k = agents - 1; k-- > 0;) {
    Matrix garble = random_stochastic(num_actions, num_actions, rng);
    garble = 0.7 * Matrix::Identity(idx(num_actions), idx(num_actions)) + 0.3 * garble;
    const Matrix joint = relabel_joint(prior.asDiagonal() * (chain[k + 1] * garble), u);
    chain[k] = joint_to_choice(joint, prior);
  }
  return boundary_from_chain(prior, u, chain, seed);
}

namespace {

struct AgentCandidates {
  std::vector<Matrix> utilities;
  std::vector<double> slack;                // action-switch margin, capped at 1
  std::vector<std::vector<double>> cross;   // cross[i][j] = G(j, k) for candidate i
  std::vector<double> realized;
};

struct ComboResult {
  double margin = -1.0;  // < 0: infeasible
  std::size_t index = 0;
};

bool better(const ComboResult& a, const ComboResult& b) {
  if (a.margin != b.margin) return a.margin > b.margin;
  return a.index < b.index;
}

constexpr double kCostSpan = 1.0 - kPositiveFloor;

std::optional<std::vector<double>> cycle_potentials(const std::vector<AgentCandidates>& agents,
                                                    const std::vector<std::size_t>& pick,
                                                    double eps) {
  const std::size_t n = agents.size();
  return potentials(n, [&](std::size_t j, std::size_t k) {
    const AgentCandidates& ak = agents[k];
    const double w = ak.realized[pick[k]] - ak.cross[pick[k]][j] - eps;
    return std::min(w, kCostSpan);
  });
}

std::vector<std::size_t> decode(std::size_t index, const std::vector<AgentCandidates>& agents) {
  std::vector<std::size_t> pick(agents.size());
  for (std::size_t k = 0; k < agents.size(); ++k) {
    pick[k] = index % agents[k].utilities.size();
    index /= agents[k].utilities.size();
  }
  return pick;
}

double combo_margin(const std::vector<AgentCandidates>& agents, std::size_t index, double floor) {
  const auto pick = decode(index, agents);
  double cap = 1.0;
  for (std::size_t k = 0; k < agents.size(); ++k) cap = std::min(cap, agents[k].slack[pick[k]]);
  if (cap < floor) return -1.0;
  if (!cycle_potentials(agents, pick, 0.0)) return -1.0;
  if (cycle_potentials(agents, pick, cap)) return cap;
  double lo = 0.0;
  double hi = cap;
  while (hi - lo > 1e-12) {
    const double mid = 0.5 * (lo + hi);
    if (cycle_potentials(agents, pick, mid)) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return lo;
}

}  // namespace

GridOracleResult grid_oracle(const DecisionDataset& d, const std::vector<double>& levels,
                             kernels::Execution exec) {
  const std::size_t cells = d.num_states() * d.num_actions();
  if (cells * d.num_agents() > 20) {
    throw Error(ErrorCode::InstanceTooLarge, "grid oracle needs |X||A|K <= 20");
  }
  if (levels.empty()) throw Error(ErrorCode::InvalidArgument, "grid has no levels");
  const std::size_t n = d.num_agents();

  std::vector<Matrix> joints;
  for (std::size_t k = 0; k < n; ++k) joints.push_back(d.prior().asDiagonal() * d.choice(k));

  double total = 1.0;
  std::vector<AgentCandidates> agents(n);
  for (std::size_t k = 0; k < n; ++k) {
    const JointPosterior jp = joint_and_posterior(d, k);
    std::size_t count = 1;
    for (std::size_t i = 0; i < cells; ++i) count *= levels.size();
    for (std::size_t code = 0; code < count; ++code) {
      Matrix u(idx(d.num_states()), idx(d.num_actions()));
      std::size_t rest = code;
      for (Eigen::Index i = 0; i < u.size(); ++i) {
        u(i / u.cols(), i % u.cols()) = levels[rest % levels.size()];
        rest /= levels.size();
      }
      double worst = -std::numeric_limits<double>::infinity();
      for (std::size_t a = 0; a < d.num_actions(); ++a) {
        if (!jp.posterior[a]) continue;
        const Vector s = u.transpose() * *jp.posterior[a];
        for (std::size_t b = 0; b < d.num_actions(); ++b) {
          if (b != a) worst = std::max(worst, s(idx(b)) - s(idx(a)));
        }
      }
      if (worst > 0.0) continue;
      AgentCandidates& ac = agents[k];
      ac.slack.push_back(std::isfinite(worst) ? std::min(1.0, -worst) : 1.0);
      ac.realized.push_back(joints[k].cwiseProduct(u).sum());
      std::vector<double> g(n);
      for (std::size_t j = 0; j < n; ++j) g[j] = expected_value_of_joint(joints[j], u);
      ac.cross.push_back(std::move(g));
      ac.utilities.push_back(std::move(u));
    }
    total *= static_cast<double>(agents[k].utilities.size());
  }
  if (total > 1e7) throw Error(ErrorCode::InstanceTooLarge, "too many grid combinations");

  GridOracleResult out;
  out.combinations = static_cast<std::size_t>(total);
  ComboResult best;
  const auto combos = static_cast<std::int64_t>(out.combinations);
  const bool parallel = exec == kernels::Execution::Parallel && omp_get_max_threads() > 1;
  if (parallel) {
#pragma omp parallel
    {
      ComboResult local;
#pragma omp for schedule(dynamic, 256)
      for (std::int64_t i = 0; i < combos; ++i) {
        const auto index = static_cast<std::size_t>(i);
        const ComboResult r{combo_margin(agents, index, local.margin), index};
        if (r.margin >= 0.0 && better(r, local)) local = r;
      }
#pragma omp critical
      if (local.margin >= 0.0 && better(local, best)) best = local;
    }
  } else {
    for (std::int64_t i = 0; i < combos; ++i) {
      const auto index = static_cast<std::size_t>(i);
      const ComboResult r{combo_margin(agents, index, best.margin), index};
      if (r.margin >= 0.0 && better(r, best)) best = r;
    }
  }

  if (best.margin < 0.0) return out;
  out.feasible = true;
  out.best_margin = best.margin;
  const auto pick = decode(best.index, agents);
  for (std::size_t k = 0; k < n; ++k) out.utilities.push_back(agents[k].utilities[pick[k]]);
  const auto dist = cycle_potentials(agents, pick, best.margin);
  const double lo = *std::min_element(dist->begin(), dist->end());
  for (double v : *dist) out.costs.push_back(v - lo + kPositiveFloor);
  return out;
}

// Saturating in eta, so the midpoint strategy is not the average of its
// neighbours.
double NoiseFamilyTruth::spread(double eta) const {
  const double t = (eta - eta_first) / (eta_last - eta_first);
  const double shape = (1.0 - std::exp(-3.0 * t)) / (1.0 - std::exp(-3.0));
  return spread_first + shape * (spread_last - spread_first);
}

Matrix NoiseFamilyTruth::strategy(double eta) const {
  const double s = spread(eta);
  const auto n = prior.size();
  Matrix p = (1.0 - s) * Matrix::Identity(n, n);
  p.rowwise() += s * prior.transpose();
  return p;
}

Matrix NoiseFamilyTruth::utility(double eta) const {
  const double t = (eta - eta_first) / (eta_last - eta_first);
  return ((1.0 - t) * diag_first + t * diag_last).asDiagonal();
}

NoiseFamilyTruth make_noise_family_truth(std::size_t num_states, double eta_first, double eta_last,
                                         std::uint64_t seed) {
  if (num_states < 2) throw Error(ErrorCode::DimensionMismatch, "need at least 2 states");
  if (!(eta_last > eta_first)) throw Error(ErrorCode::InvalidArgument, "eta range is empty");
  Rng rng(seed);
  NoiseFamilyTruth t;
  t.eta_first = eta_first;
  t.eta_last = eta_last;
  t.prior = random_stochastic(1, num_states, rng, 8.0).row(0).transpose();
  t.prior = (t.prior.array() + 1.0 / static_cast<double>(num_states)).matrix();
  t.prior /= t.prior.sum();
  t.spread_first = uniform(rng, 0.05, 0.15);
  t.spread_last = uniform(rng, 0.35, 0.5);
  t.diag_first.resize(idx(num_states));
  t.diag_last.resize(idx(num_states));
  for (std::size_t x = 0; x < num_states; ++x) {
    t.diag_first(idx(x)) = uniform(rng, 0.6, 1.0);
    t.diag_last(idx(x)) = uniform(rng, 0.6, 1.0);
  }
  return t;
}

DecisionDataset sample_noise_family(const NoiseFamilyTruth& truth, const std::vector<double>& etas) {
  DatasetCandidate cand;
  cand.num_states = static_cast<std::size_t>(truth.prior.size());
  cand.num_actions = cand.num_states;
  cand.prior = truth.prior;
  for (std::size_t k = 0; k < etas.size(); ++k) {
    cand.agents.push_back({std::to_string(k), truth.strategy(etas[k])});
  }
  return validate_dataset(std::move(cand));
}

}  // namespace umri
