#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "umri/dataset.hpp"
#include "umri/error.hpp"

namespace fixtures {

// Code of the umri::Error thrown by f, or nullopt if none was thrown.
inline std::optional<umri::ErrorCode> error_code(const std::function<void()>& f) {
  try {
    f();
  } catch (const umri::Error& e) {
    return e.code();
  }
  return std::nullopt;
}

using umri::Matrix;
using umri::Vector;

inline Matrix mat2(double a, double b, double c, double d) {
  Matrix m(2, 2);
  m << a, b, c, d;
  return m;
}

inline Vector uniform(std::size_t n) {
  return Vector::Constant(static_cast<Eigen::Index>(n), 1.0 / static_cast<double>(n));
}

inline umri::DecisionDataset make(const Vector& prior, const std::vector<Matrix>& choices) {
  umri::DatasetCandidate c;
  c.num_states = static_cast<std::size_t>(prior.size());
  c.num_actions = static_cast<std::size_t>(choices.front().cols());
  c.prior = prior;
  for (std::size_t k = 0; k < choices.size(); ++k) c.agents.push_back({std::to_string(k + 1), choices[k]});
  return umri::validate_dataset(std::move(c));
}

// Two agents, a sharp and a noisy classifier, uniform prior.
inline umri::DecisionDataset d2() {
  return make(uniform(2), {mat2(0.9, 0.1, 0.1, 0.9), mat2(0.6, 0.4, 0.4, 0.6)});
}

inline std::vector<Matrix> d2_witness_utilities() {
  return {Matrix::Identity(2, 2), mat2(0.6, 0.4, 0.4, 0.6)};
}
inline std::vector<double> d2_witness_costs() { return {0.2, 0.05}; }

inline umri::DecisionDataset uniform_dataset(std::size_t agents, std::size_t n) {
  return make(uniform(n), std::vector<Matrix>(agents, Matrix::Constant(static_cast<Eigen::Index>(n),
                                                                       static_cast<Eigen::Index>(n),
                                                                       1.0 / static_cast<double>(n))));
}

inline umri::DecisionDataset identical_dataset() {
  return make(uniform(2), {mat2(0.8, 0.2, 0.3, 0.7), mat2(0.8, 0.2, 0.3, 0.7)});
}

// Invariant under swapping both states and actions.
inline umri::DecisionDataset symmetric_dataset() {
  return make(uniform(2), {mat2(0.9, 0.1, 0.1, 0.9), mat2(0.7, 0.3, 0.3, 0.7), mat2(0.55, 0.45, 0.45, 0.55)});
}

// Three states, symmetric under every simultaneous relabeling.
inline umri::DecisionDataset symmetric3_dataset() {
  auto sym = [](double d) {
    Matrix m = Matrix::Constant(3, 3, (1.0 - d) / 2.0);
    m.diagonal().setConstant(d);
    return m;
  };
  return make(uniform(3), {sym(0.9), sym(0.7), sym(0.5)});
}

}  // namespace fixtures
