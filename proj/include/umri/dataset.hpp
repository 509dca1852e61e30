#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "umri/types.hpp"

namespace umri {

/// One agent's stochastic classifier, p_k(a|x): rows are states, columns actions.
struct AgentChoiceMatrix {
  std::string agent_id;
  Matrix choice_prob;
};

/// Unvalidated dataset fields, as read from a file or assembled by a generator.
struct DatasetCandidate {
  std::size_t num_states = 0;
  std::size_t num_actions = 0;
  Vector prior;
  std::vector<AgentChoiceMatrix> agents;
  std::vector<std::string> labels;
};

/// Prior over states plus one row-stochastic choice matrix per agent.
///
/// Instances only come out of validate_dataset(), so every accessor can assume
/// the invariants: stochastic prior and rows, consistent shapes, K >= 2. Agent
/// order is preserved from the input; downstream code uses it as the index of
/// the training epoch or noise level.
class DecisionDataset {
 public:
  std::size_t num_states() const { return num_states_; }
  std::size_t num_actions() const { return num_actions_; }
  std::size_t num_agents() const { return agents_.size(); }

  const Vector& prior() const { return prior_; }
  const std::vector<AgentChoiceMatrix>& agents() const { return agents_; }
  const AgentChoiceMatrix& agent(std::size_t k) const;
  const Matrix& choice(std::size_t k) const { return agent(k).choice_prob; }
  const std::vector<std::string>& labels() const { return labels_; }

  /// Copy of this dataset restricted to the given agents, in the given order.
  DecisionDataset subset(const std::vector<std::size_t>& agent_indices) const;

  DatasetCandidate to_candidate() const;

 private:
  friend DecisionDataset validate_dataset(DatasetCandidate raw);

  DecisionDataset() = default;

  std::size_t num_states_ = 0;
  std::size_t num_actions_ = 0;
  Vector prior_;
  std::vector<AgentChoiceMatrix> agents_;
  std::vector<std::string> labels_;
};

/// Checks shapes and stochasticity. Rows (and the prior) whose sums are within
/// kRenormalizeTol of one are renormalized; anything further off is rejected.
///
/// Throws Error{DimensionMismatch | NotStochastic | TooFewAgents}.
DecisionDataset validate_dataset(DatasetCandidate raw);

/// Entrywise comparison of priors and choice matrices.
bool approx_equal(const DecisionDataset& a, const DecisionDataset& b, double tol = 1e-9);

struct JointPosterior {
  Matrix joint;    ///< p(x,a) = prior(x) p(a|x)
  Vector marginal; ///< p(a)
  /// Revealed posterior p(.|a); empty for actions that are never chosen.
  std::vector<std::optional<Vector>> posterior;
  bool zero_marginal = false;
};

JointPosterior joint_and_posterior(const Vector& prior, const Matrix& choice);
JointPosterior joint_and_posterior(const DecisionDataset& d, std::size_t k);

/// Sum_a max_b Sum_x joint(x,a) u(x,b) for strategy `choice` under `prior`.
double expected_value(const Vector& prior, const Matrix& choice, const Matrix& u);
double expected_value(const DecisionDataset& d, std::size_t k, const Matrix& u);

/// Sum_{x,a} joint(x,a) u(x,a).
double realized_value(const Vector& prior, const Matrix& choice, const Matrix& u);
double realized_value(const DecisionDataset& d, std::size_t k, const Matrix& u);

/// Expected value from a precomputed joint; the inner loop shared by the
/// residual kernels.
double expected_value_of_joint(const Matrix& joint, const Matrix& u);

/// For each action a, argmax_b Sum_x joint(x,a) u(x,b); ties go to the lowest b.
std::vector<std::size_t> best_responses(const Matrix& joint, const Matrix& u);

/// Simultaneous state/action relabelings pi with prior(pi x) = prior(x) and
/// p_k(pi a | pi x) = p_k(a|x) for every agent, identity included. Requires a
/// square dataset; returns only the identity when num_states > max_states.
std::vector<std::vector<std::size_t>> simultaneous_symmetries(const DecisionDataset& d,
                                                              std::size_t max_states = 7,
                                                              double tol = 1e-12);

/// Average of u(pi x, pi a) over the given relabelings.
Matrix symmetrize(const Matrix& u, const std::vector<std::vector<std::size_t>>& perms);

struct SoftmaxRecord {
  std::string image_id;
  std::size_t true_label = 0;
  std::vector<double> softmax;
};

struct AgentRecords {
  std::string agent_id;
  std::vector<SoftmaxRecord> records;
};

/// Per-class averaging of softmax outputs into a prior and choice matrices.
/// num_states defaults to the softmax width. The result is not validated, so
/// single-agent logs can still be aggregated and inspected.
///
/// Throws Error{EmptyClass | RaggedAgents | NotStochastic | DimensionMismatch}.
DatasetCandidate aggregate_softmax(const std::vector<AgentRecords>& groups,
                                   std::optional<std::size_t> num_states = std::nullopt);

/// aggregate_softmax() followed by validate_dataset().
DecisionDataset ingest_softmax(const std::vector<AgentRecords>& groups,
                               std::optional<std::size_t> num_states = std::nullopt);

}  // namespace umri
