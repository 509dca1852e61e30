#include "umri/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <tuple>

#include "umri/error.hpp"

namespace umri {

namespace {

std::string shape_of(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

// Renormalizes a probability vector in place, or throws NotStochastic.
// The tolerance is inclusive: a decimal sum like 0.999999 lands a few ulps
// past it in binary.
constexpr double kRenormalizeLimit = kRenormalizeTol + 1e-15;

template <typename Row>
void normalize_row(Row&& row, const std::string& where) {
  for (Eigen::Index i = 0; i < row.size(); ++i) {
    const double v = row(i);
    if (!std::isfinite(v) || v < 0.0) {
      if (std::isfinite(v) && v > -1e-12) {
        row(i) = 0.0;
        continue;
      }
      throw Error(ErrorCode::NotStochastic, where + " has entry " + std::to_string(v));
    }
    if (v > 1.0 + kRenormalizeLimit) {
      throw Error(ErrorCode::NotStochastic, where + " has entry above 1");
    }
  }
  const double sum = row.sum();
  if (std::abs(sum - 1.0) > kRenormalizeLimit) {
    throw Error(ErrorCode::NotStochastic, where + " sums to " + std::to_string(sum));
  }
  row /= sum;
}

}  // namespace

const AgentChoiceMatrix& DecisionDataset::agent(std::size_t k) const {
  if (k >= agents_.size()) {
    throw Error(ErrorCode::InvalidArgument,
                "agent index " + std::to_string(k) + " out of " + std::to_string(agents_.size()));
  }
  return agents_[k];
}

DecisionDataset DecisionDataset::subset(const std::vector<std::size_t>& agent_indices) const {
  DatasetCandidate c = to_candidate();
  c.agents.clear();
  for (std::size_t k : agent_indices) c.agents.push_back(agent(k));
  return validate_dataset(std::move(c));
}

DatasetCandidate DecisionDataset::to_candidate() const {
  return DatasetCandidate{num_states_, num_actions_, prior_, agents_, labels_};
}

DecisionDataset validate_dataset(DatasetCandidate raw) {
  if (raw.num_states == 0 || raw.num_actions == 0) {
    throw Error(ErrorCode::DimensionMismatch, "num_states and num_actions must be positive");
  }
  if (static_cast<std::size_t>(raw.prior.size()) != raw.num_states) {
    throw Error(ErrorCode::DimensionMismatch,
                "prior has length " + std::to_string(raw.prior.size()) + ", expected " +
                    std::to_string(raw.num_states));
  }
  if (!raw.labels.empty() && raw.labels.size() != raw.num_states) {
    throw Error(ErrorCode::DimensionMismatch, "labels must name every state");
  }
  normalize_row(raw.prior, "prior");

  for (std::size_t k = 0; k < raw.agents.size(); ++k) {
    auto& agent = raw.agents[k];
    if (agent.agent_id.empty()) agent.agent_id = std::to_string(k);
    Matrix& p = agent.choice_prob;
    if (static_cast<std::size_t>(p.rows()) != raw.num_states ||
        static_cast<std::size_t>(p.cols()) != raw.num_actions) {
      throw Error(ErrorCode::DimensionMismatch,
                  "agent " + agent.agent_id + " choice matrix is " + shape_of(p));
    }
    for (Eigen::Index x = 0; x < p.rows(); ++x) {
      normalize_row(p.row(x), "agent " + agent.agent_id + " row " + std::to_string(x));
    }
  }
  if (raw.agents.size() < 2) {
    throw Error(ErrorCode::TooFewAgents,
                "need at least 2 agents, got " + std::to_string(raw.agents.size()));
  }

  DecisionDataset d;
  d.num_states_ = raw.num_states;
  d.num_actions_ = raw.num_actions;
  d.prior_ = std::move(raw.prior);
  d.agents_ = std::move(raw.agents);
  d.labels_ = std::move(raw.labels);
  return d;
}

bool approx_equal(const DecisionDataset& a, const DecisionDataset& b, double tol) {
  if (a.num_states() != b.num_states() || a.num_actions() != b.num_actions() ||
      a.num_agents() != b.num_agents()) {
    return false;
  }
  if ((a.prior() - b.prior()).cwiseAbs().maxCoeff() > tol) return false;
  for (std::size_t k = 0; k < a.num_agents(); ++k) {
    if ((a.choice(k) - b.choice(k)).cwiseAbs().maxCoeff() > tol) return false;
  }
  return true;
}

JointPosterior joint_and_posterior(const Vector& prior, const Matrix& choice) {
  if (prior.size() != choice.rows()) {
    throw Error(ErrorCode::DimensionMismatch, "prior length does not match choice rows");
  }
  JointPosterior out;
  out.joint = prior.asDiagonal() * choice;
  out.marginal = out.joint.colwise().sum().transpose();
  out.posterior.resize(static_cast<std::size_t>(choice.cols()));
  for (Eigen::Index a = 0; a < choice.cols(); ++a) {
    const double m = out.marginal(a);
    if (m > 0.0) {
      out.posterior[static_cast<std::size_t>(a)] = Vector(out.joint.col(a) / m);
    } else {
      out.zero_marginal = true;
    }
  }
  return out;
}

JointPosterior joint_and_posterior(const DecisionDataset& d, std::size_t k) {
  return joint_and_posterior(d.prior(), d.choice(k));
}

namespace {

void check_utility(const Matrix& u, Eigen::Index states, Eigen::Index actions) {
  if (u.rows() != states || u.cols() != actions) {
    throw Error(ErrorCode::DimensionMismatch, "utility is " + shape_of(u) + ", expected " +
                                                  std::to_string(states) + "x" +
                                                  std::to_string(actions));
  }
  if (!u.allFinite()) throw Error(ErrorCode::InvalidArgument, "utility has non-finite entries");
}

}  // namespace

double expected_value_of_joint(const Matrix& joint, const Matrix& u) {
  // scores(a, b) = Sum_x joint(x,a) u(x,b)
  const Matrix scores = joint.transpose() * u;
  double total = 0.0;
  for (Eigen::Index a = 0; a < scores.rows(); ++a) total += scores.row(a).maxCoeff();
  return total;
}

std::vector<std::size_t> best_responses(const Matrix& joint, const Matrix& u) {
  const Matrix scores = joint.transpose() * u;
  std::vector<std::size_t> out(static_cast<std::size_t>(scores.rows()), 0);
  for (Eigen::Index a = 0; a < scores.rows(); ++a) {
    Eigen::Index best = 0;
    for (Eigen::Index b = 1; b < scores.cols(); ++b) {
      if (scores(a, b) > scores(a, best)) best = b;
    }
    out[static_cast<std::size_t>(a)] = static_cast<std::size_t>(best);
  }
  return out;
}

double expected_value(const Vector& prior, const Matrix& choice, const Matrix& u) {
  check_utility(u, choice.rows(), choice.cols());
  return expected_value_of_joint(prior.asDiagonal() * choice, u);
}

double expected_value(const DecisionDataset& d, std::size_t k, const Matrix& u) {
  return expected_value(d.prior(), d.choice(k), u);
}

double realized_value(const Vector& prior, const Matrix& choice, const Matrix& u) {
  check_utility(u, choice.rows(), choice.cols());
  return (prior.asDiagonal() * choice).cwiseProduct(u).sum();
}

double realized_value(const DecisionDataset& d, std::size_t k, const Matrix& u) {
  return realized_value(d.prior(), d.choice(k), u);
}

std::vector<std::vector<std::size_t>> simultaneous_symmetries(const DecisionDataset& d,
                                                              std::size_t max_states, double tol) {
  const std::size_t n = d.num_states();
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  std::vector<std::vector<std::size_t>> out{perm};
  if (n != d.num_actions() || n > max_states) return out;
  while (std::next_permutation(perm.begin(), perm.end())) {
    bool ok = true;
    for (std::size_t x = 0; x < n && ok; ++x) {
      ok = std::abs(d.prior()(static_cast<Eigen::Index>(perm[x])) -
                    d.prior()(static_cast<Eigen::Index>(x))) <= tol;
    }
    for (std::size_t k = 0; k < d.num_agents() && ok; ++k) {
      const Matrix& p = d.choice(k);
      for (std::size_t x = 0; x < n && ok; ++x) {
        for (std::size_t a = 0; a < n && ok; ++a) {
          ok = std::abs(p(static_cast<Eigen::Index>(perm[x]), static_cast<Eigen::Index>(perm[a])) -
                        p(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(a))) <= tol;
        }
      }
    }
    if (ok) out.push_back(perm);
  }
  return out;
}

Matrix symmetrize(const Matrix& u, const std::vector<std::vector<std::size_t>>& perms) {
  if (perms.size() <= 1) return u;
  Matrix sum = Matrix::Zero(u.rows(), u.cols());
  for (const auto& pi : perms) {
    for (Eigen::Index x = 0; x < u.rows(); ++x) {
      for (Eigen::Index a = 0; a < u.cols(); ++a) {
        sum(x, a) += u(static_cast<Eigen::Index>(pi[static_cast<std::size_t>(x)]),
                       static_cast<Eigen::Index>(pi[static_cast<std::size_t>(a)]));
      }
    }
  }
  return sum / static_cast<double>(perms.size());
}

DatasetCandidate aggregate_softmax(const std::vector<AgentRecords>& groups,
                                   std::optional<std::size_t> num_states) {
  if (groups.empty()) throw Error(ErrorCode::TooFewAgents, "no agents in softmax log");
  std::size_t num_actions = 0;
  for (const auto& g : groups) {
    if (g.records.empty()) {
      throw Error(ErrorCode::EmptyClass, "agent " + g.agent_id + " has no records");
    }
    if (num_actions == 0) num_actions = g.records.front().softmax.size();
  }
  if (num_actions == 0) throw Error(ErrorCode::DimensionMismatch, "empty softmax vectors");
  const std::size_t states = num_states.value_or(num_actions);

  DatasetCandidate out;
  out.num_states = states;
  out.num_actions = num_actions;

  const std::size_t n = groups.front().records.size();
  std::vector<std::size_t> reference_counts;

  for (const auto& g : groups) {
    if (g.records.size() != n) {
      throw Error(ErrorCode::RaggedAgents, "agent " + g.agent_id + " has " +
                                               std::to_string(g.records.size()) +
                                               " records, expected " + std::to_string(n));
    }
    // Summation order is fixed by sorting, so the result does not depend on
    // the order records arrived in.
    std::vector<const SoftmaxRecord*> sorted;
    sorted.reserve(g.records.size());
    for (const auto& r : g.records) sorted.push_back(&r);
    std::sort(sorted.begin(), sorted.end(), [](const SoftmaxRecord* a, const SoftmaxRecord* b) {
      return std::tie(a->true_label, a->image_id, a->softmax) <
             std::tie(b->true_label, b->image_id, b->softmax);
    });

    Matrix sums = Matrix::Zero(static_cast<Eigen::Index>(states),
                               static_cast<Eigen::Index>(num_actions));
    std::vector<std::size_t> counts(states, 0);
    for (const SoftmaxRecord* r : sorted) {
      if (r->softmax.size() != num_actions) {
        throw Error(ErrorCode::DimensionMismatch,
                    "record " + r->image_id + " has " + std::to_string(r->softmax.size()) +
                        " probabilities, expected " + std::to_string(num_actions));
      }
      if (r->true_label >= states) {
        throw Error(ErrorCode::DimensionMismatch,
                    "record " + r->image_id + " label " + std::to_string(r->true_label) +
                        " outside " + std::to_string(states) + " states");
      }
      double total = 0.0;
      for (double v : r->softmax) {
        if (!std::isfinite(v) || v < 0.0) {
          throw Error(ErrorCode::NotStochastic, "record " + r->image_id + " has negative entry");
        }
        total += v;
      }
      if (std::abs(total - 1.0) > kRenormalizeLimit) {
        throw Error(ErrorCode::NotStochastic,
                    "record " + r->image_id + " sums to " + std::to_string(total));
      }
      const auto x = static_cast<Eigen::Index>(r->true_label);
      for (std::size_t a = 0; a < num_actions; ++a) {
        sums(x, static_cast<Eigen::Index>(a)) += r->softmax[a];
      }
      ++counts[r->true_label];
    }
    for (std::size_t x = 0; x < states; ++x) {
      if (counts[x] == 0) {
        throw Error(ErrorCode::EmptyClass,
                    "state " + std::to_string(x) + " has no records for agent " + g.agent_id);
      }
    }
    if (reference_counts.empty()) {
      reference_counts = counts;
    } else if (counts != reference_counts) {
      throw Error(ErrorCode::RaggedAgents,
                  "agent " + g.agent_id + " saw a different class composition");
    }
    for (std::size_t x = 0; x < states; ++x) {
      sums.row(static_cast<Eigen::Index>(x)) /= static_cast<double>(counts[x]);
    }
    out.agents.push_back(AgentChoiceMatrix{g.agent_id, std::move(sums)});
  }

  out.prior = Vector(static_cast<Eigen::Index>(states));
  for (std::size_t x = 0; x < states; ++x) {
    out.prior(static_cast<Eigen::Index>(x)) =
        static_cast<double>(reference_counts[x]) / static_cast<double>(n);
  }
  return out;
}

DecisionDataset ingest_softmax(const std::vector<AgentRecords>& groups,
                               std::optional<std::size_t> num_states) {
  return validate_dataset(aggregate_softmax(groups, num_states));
}

}  // namespace umri
