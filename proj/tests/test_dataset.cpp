#include <cmath>

#include "doctest.h"
#include "fixtures.hpp"
#include "oracle.hpp"
#include "umri/dataset.hpp"
#include "umri/error.hpp"
#include "umri/synth.hpp"

using namespace umri;
using fixtures::mat2;

namespace {

DatasetCandidate two_by_two(std::size_t agents) {
  DatasetCandidate c;
  c.num_states = 2;
  c.num_actions = 2;
  c.prior = fixtures::uniform(2);
  for (std::size_t k = 0; k < agents; ++k) c.agents.push_back({"a" + std::to_string(k), mat2(0.9, 0.1, 0.1, 0.9)});
  return c;
}

}  // namespace

TEST_CASE("validation accepts well-formed input and renormalizes small drift") {
  CHECK(validate_dataset(two_by_two(2)).num_agents() == 2);

  DatasetCandidate drift = two_by_two(2);
  drift.agents[0].choice_prob(0, 0) = 0.899999;  // row sum 0.999999
  const DecisionDataset d = validate_dataset(drift);
  CHECK(d.choice(0).row(0).sum() == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("validation rejects bad input") {
  CHECK(fixtures::error_code([] { validate_dataset(two_by_two(1)); }) == ErrorCode::TooFewAgents);

  DatasetCandidate off = two_by_two(2);
  off.agents[1].choice_prob(1, 1) = 0.8;
  CHECK(fixtures::error_code([&] { validate_dataset(off); }) == ErrorCode::NotStochastic);

  DatasetCandidate negative = two_by_two(2);
  negative.agents[1].choice_prob << 1.1, -0.1, 0.1, 0.9;
  CHECK(fixtures::error_code([&] { validate_dataset(negative); }) == ErrorCode::NotStochastic);

  DatasetCandidate shape = two_by_two(2);
  shape.agents[1].choice_prob = Matrix::Constant(3, 2, 0.5);
  CHECK(fixtures::error_code([&] { validate_dataset(shape); }) == ErrorCode::DimensionMismatch);
}

TEST_CASE("joint and revealed posterior") {
  const DecisionDataset d = fixtures::make(fixtures::uniform(2), {mat2(0.8, 0.2, 0.4, 0.6), mat2(0.8, 0.2, 0.4, 0.6)});
  const JointPosterior jp = joint_and_posterior(d, 0);
  CHECK(jp.joint(0, 0) == doctest::Approx(0.4));
  CHECK(jp.joint(0, 1) == doctest::Approx(0.1));
  CHECK(jp.joint(1, 0) == doctest::Approx(0.2));
  CHECK(jp.joint(1, 1) == doctest::Approx(0.3));
  REQUIRE(jp.posterior[0]);
  CHECK((*jp.posterior[0])(0) == doctest::Approx(2.0 / 3.0));
  CHECK((*jp.posterior[0])(1) == doctest::Approx(1.0 / 3.0));
  CHECK_FALSE(jp.zero_marginal);

  const JointPosterior id = joint_and_posterior(fixtures::uniform(3), Matrix::Identity(3, 3));
  for (int a = 0; a < 3; ++a) {
    REQUIRE(id.posterior[static_cast<std::size_t>(a)]);
    CHECK((*id.posterior[static_cast<std::size_t>(a)] - Vector::Unit(3, a)).norm() < 1e-15);
  }

  Matrix never(2, 2);
  never << 1.0, 0.0, 1.0, 0.0;
  const JointPosterior z = joint_and_posterior(fixtures::uniform(2), never);
  CHECK(z.zero_marginal);
  CHECK_FALSE(z.posterior[1]);
}

TEST_CASE("expected and realized values match hand arithmetic and the naive oracle") {
  const Vector mu = fixtures::uniform(2);
  const Matrix sharp = mat2(0.9, 0.1, 0.1, 0.9);
  const Matrix noisy = mat2(0.6, 0.4, 0.4, 0.6);
  CHECK(expected_value(mu, sharp, Matrix::Ones(2, 2)) == doctest::Approx(1.0));
  CHECK(expected_value(mu, sharp, Matrix::Identity(2, 2)) == doctest::Approx(0.9));
  CHECK(expected_value(mu, noisy, Matrix::Identity(2, 2)) == doctest::Approx(0.6));
  CHECK(realized_value(mu, sharp, Matrix::Ones(2, 2)) == doctest::Approx(1.0));
  CHECK(realized_value(mu, sharp, Matrix::Identity(2, 2)) == doctest::Approx(0.9));
  CHECK(realized_value(mu, noisy, noisy) == doctest::Approx(0.52));

  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const Vector prior = random_stochastic(1, 4, rng).row(0).transpose();
    const Matrix p = random_stochastic(4, 3, rng);
    const Matrix u = Matrix::Random(4, 3);
    CHECK(expected_value(prior, p, u) == doctest::Approx(oracle::J(prior, p, u)).epsilon(1e-12));
    CHECK(realized_value(prior, p, u) == doctest::Approx(oracle::F(prior, p, u)).epsilon(1e-12));
  }
}

TEST_CASE("garbling never raises expected value") {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const Vector prior = random_stochastic(1, 3, rng).row(0).transpose();
    const Matrix p = random_stochastic(3, 3, rng);
    const Matrix garble = random_stochastic(3, 3, rng);
    const Matrix u = Matrix::Random(3, 3);
    CHECK(oracle::J(prior, p * garble, u) <= oracle::J(prior, p, u) + 1e-12);
    CHECK(expected_value(prior, p * garble, u) <= expected_value(prior, p, u) + 1e-12);
  }
}

TEST_CASE("softmax aggregation") {
  AgentRecords one{"cnn", {{"i0", 0, {0.8, 0.2}}, {"i1", 1, {0.3, 0.7}}}};
  const DatasetCandidate c = aggregate_softmax({one});
  CHECK(c.prior(0) == doctest::Approx(0.5));
  CHECK(c.agents[0].choice_prob(0, 0) == doctest::Approx(0.8));
  CHECK(c.agents[0].choice_prob(1, 1) == doctest::Approx(0.7));

  AgentRecords all_zero{"cnn", {{"i0", 0, {0.8, 0.2}}, {"i1", 0, {0.6, 0.4}}}};
  CHECK(fixtures::error_code([&] { aggregate_softmax({all_zero}); }) == ErrorCode::EmptyClass);

  AgentRecords big{"cnn", {}};
  for (int i = 0; i < 10000; ++i) {
    std::vector<double> s(10, 0.05);
    s[static_cast<std::size_t>(i % 10)] = 0.55;
    big.records.push_back({std::to_string(i), static_cast<std::size_t>(i % 10), s});
  }
  const DatasetCandidate cb = aggregate_softmax({big});
  for (int x = 0; x < 10; ++x) CHECK(cb.prior(x) == doctest::Approx(0.1));

  AgentRecords other = one;
  other.agent_id = "other";
  other.records.pop_back();
  CHECK(fixtures::error_code([&] { aggregate_softmax({one, other}); }) == ErrorCode::RaggedAgents);
}

TEST_CASE("simultaneous symmetries") {
  CHECK(simultaneous_symmetries(fixtures::symmetric_dataset()).size() == 2);
  CHECK(simultaneous_symmetries(fixtures::symmetric3_dataset()).size() == 6);
  CHECK(simultaneous_symmetries(fixtures::make(fixtures::uniform(2), {mat2(0.9, 0.1, 0.2, 0.8), mat2(0.6, 0.4, 0.4, 0.6)}))
            .size() == 1);
}
