#include <cmath>

#include "doctest.h"
#include "fixtures.hpp"
#include "oracle.hpp"
#include "umri/brp.hpp"
#include "umri/error.hpp"
#include "umri/synth.hpp"

using namespace umri;
using fixtures::mat2;

namespace {

double l1(const std::vector<Matrix>& us) {
  double s = 0.0;
  for (const Matrix& u : us) s += u.cwiseAbs().sum();
  return s;
}

// Largest strict residual of a profile, by the naive oracle.
double oracle_worst(const DecisionDataset& d, const std::vector<Matrix>& u, const std::vector<double>& c) {
  std::vector<Matrix> p;
  double worst = -1e300;
  for (std::size_t k = 0; k < d.num_agents(); ++k) {
    p.push_back(d.choice(k));
    worst = std::max(worst, oracle::worst_nias(d.prior(), d.choice(k), u[k]));
  }
  return std::max(worst, oracle::worst_niac(d.prior(), p, u, c));
}

std::vector<Matrix> choices(const DecisionDataset& d) {
  std::vector<Matrix> p;
  for (std::size_t k = 0; k < d.num_agents(); ++k) p.push_back(d.choice(k));
  return p;
}

}  // namespace

TEST_CASE("action-switch residuals") {
  const DecisionDataset d = fixtures::d2();
  const NiasResiduals r = nias_residuals(d, {Matrix::Identity(2, 2), Matrix::Identity(2, 2)});
  CHECK(r(0, 0, 1) == doctest::Approx(-0.8));
  CHECK(r(0, 0, 0) == 0.0);

  const NiasResiduals flat = nias_residuals(d, {Matrix::Constant(2, 2, 0.3), Matrix::Constant(2, 2, 0.7)});
  for (std::size_t k = 0; k < 2; ++k)
    for (std::size_t a = 0; a < 2; ++a)
      for (std::size_t b = 0; b < 2; ++b) CHECK(flat(k, a, b) == doctest::Approx(0.0));
}

TEST_CASE("attention-cycle residuals") {
  const DecisionDataset d = fixtures::d2();
  const Matrix r = niac_residuals(d, fixtures::d2_witness_utilities(), fixtures::d2_witness_costs());
  CHECK(r(1, 0) == doctest::Approx(-0.15));
  CHECK(r(0, 0) == doctest::Approx(0.0));
  CHECK(r(1, 1) == doctest::Approx(0.0));

  // Identical strategies, shared utility, equal costs: off-diagonal = G - F.
  const DecisionDataset same = fixtures::identical_dataset();
  const Matrix u = Matrix::Identity(2, 2);
  const Matrix rs = niac_residuals(same, {u, u}, {0.3, 0.3});
  const double gap = oracle::J(same.prior(), same.choice(0), u) - oracle::F(same.prior(), same.choice(0), u);
  CHECK(rs(0, 1) == doctest::Approx(gap));
  CHECK(rs(0, 1) >= 0.0);
  CHECK(rs(0, 1) == doctest::Approx(0.0));  // identity satisfies the action-switch rows here

  Rng rng(8);
  for (int trial = 0; trial < 30; ++trial) {
    const GroundTruth g = generate_feasible_dataset(3, 3, 3, 0.01, static_cast<std::uint64_t>(trial + 1));
    std::vector<Matrix> us;
    std::vector<double> cs;
    for (int k = 0; k < 3; ++k) {
      us.push_back(random_stochastic(3, 3, rng));
      cs.push_back(random_stochastic(1, 2, rng)(0, 0));
    }
    const Matrix lib = niac_residuals(g.dataset, us, cs);
    const auto p = choices(g.dataset);
    for (std::size_t j = 0; j < 3; ++j)
      for (std::size_t k = 0; k < 3; ++k)
        CHECK(lib(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k)) ==
              doctest::Approx(oracle::J(g.dataset.prior(), p[j], us[k]) - cs[j] - oracle::F(g.dataset.prior(), p[k], us[k]) + cs[k]));
  }
}

TEST_CASE("max margin on the two-agent fixture") {
  const DecisionDataset d = fixtures::d2();
  CHECK(oracle_worst(d, fixtures::d2_witness_utilities(), fixtures::d2_witness_costs()) <= -0.04 + 1e-12);

  const BrpFit fit = brp_max_margin(d);
  CHECK(fit.report.epsilon_star >= 0.04);
  CHECK_FALSE(fit.report.degenerate);
  CHECK(oracle_worst(d, fit.profile.utilities, fit.profile.costs) <= -fit.report.epsilon_star + 1e-9);
  for (const Matrix& u : fit.profile.utilities) {
    CHECK(u.minCoeff() >= kPositiveFloor - 1e-12);
    CHECK(u.maxCoeff() <= 1.0 + 1e-12);
  }
}

TEST_CASE("uninformative and identical datasets are degenerate") {
  const BrpFit uni = brp_max_margin(fixtures::uniform_dataset(3, 3));
  CHECK(uni.report.robustness == doctest::Approx(0.0).epsilon(1e-6));
  CHECK(uni.report.degenerate);

  const BrpFit same = brp_max_margin(fixtures::identical_dataset());
  CHECK(same.report.epsilon_star <= 1e-7);
  CHECK(same.report.degenerate);
  CHECK(fixtures::error_code([&] { brp_sparsest(fixtures::identical_dataset(), same); }) ==
        ErrorCode::DegenerateDataset);
}

TEST_CASE("homogeneity of residuals and robustness") {
  const DecisionDataset d = fixtures::d2();
  const BrpFit fit = brp_max_margin(d);
  const Matrix base = niac_residuals(d, fit.profile.utilities, fit.profile.costs);
  const NiasResiduals base_n = nias_residuals(d, fit.profile.utilities);
  const double r0 = robustness(normalize_profile(fit.profile));
  for (double t : {0.5, 2.0}) {
    const UtilityProfile s = scale_profile(fit.profile, t);
    const Matrix scaled = niac_residuals(d, s.utilities, s.costs);
    CHECK((scaled - t * base).cwiseAbs().maxCoeff() <= 1e-9);
    const NiasResiduals n = nias_residuals(d, s.utilities);
    CHECK(n(1, 0, 1) == doctest::Approx(t * base_n(1, 0, 1)).epsilon(1e-9));
    CHECK(std::abs(robustness(normalize_profile(s)) - r0) <= 1e-9);
  }
}

TEST_CASE("sparse utilities") {
  const DecisionDataset d = fixtures::d2();
  const BrpFit fit = brp_max_margin(d);
  const UtilityProfile sparse = brp_sparsest(d, fit, 0.5);
  const UtilityProfile raw = brp_sparsest_raw(d, fit, 0.5);
  CHECK(l1(raw.utilities) <= l1(fit.profile.utilities) + 1e-9);
  // Same comparison after applying the sparse solution's rescaling to both.
  const double t = sparse.utilities[0].norm() / raw.utilities[0].norm();
  CHECK(l1(sparse.utilities) <= t * l1(fit.profile.utilities) + 1e-9);
  double norm2 = 0.0;
  for (const Matrix& u : sparse.utilities) norm2 += u.squaredNorm();
  CHECK(norm2 == doctest::Approx(2.0));
  CHECK(oracle_worst(d, sparse.utilities, sparse.costs) <= 1e-9);

  for (const DecisionDataset& sym : {fixtures::symmetric_dataset(), fixtures::symmetric3_dataset()}) {
    const UtilityProfile s = brp_sparsest(sym, 0.5);
    const auto perms = simultaneous_symmetries(sym);
    REQUIRE(perms.size() > 1);
    for (const Matrix& u : s.utilities) {
      for (const auto& pi : perms) {
        for (std::size_t x = 0; x < pi.size(); ++x)
          for (std::size_t a = 0; a < pi.size(); ++a)
            CHECK(std::abs(u(static_cast<Eigen::Index>(pi[x]), static_cast<Eigen::Index>(pi[a])) -
                           u(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(a))) <= 1e-6);
      }
    }
  }
}

TEST_CASE("reconstructed cost") {
  const DecisionDataset d = fixtures::d2();
  const UtilityProfile witness = make_profile(d, fixtures::d2_witness_utilities(), fixtures::d2_witness_costs());
  const PiecewiseAffineCost c = reconstruct_cost(d, witness);
  CHECK(c.evaluate(d.choice(0)) == doctest::Approx(0.2));
  CHECK(c.evaluate(d.choice(1)) == doctest::Approx(0.05));

  const BrpFit fit = brp_max_margin(d);
  const PiecewiseAffineCost fitted = reconstruct_cost(d, fit.profile);
  const auto p = choices(d);
  Rng rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    const Matrix q = random_stochastic(2, 2, rng);
    CHECK(fitted.evaluate(q) ==
          doctest::Approx(oracle::cost(d.prior(), p, fit.profile.utilities, fit.profile.costs, q)).epsilon(1e-12));
    // Convexity along a segment between an anchor and a random strategy.
    const double theta = 0.3;
    const Matrix mid = theta * d.choice(0) + (1 - theta) * q;
    CHECK(fitted.evaluate(mid) <= theta * fitted.evaluate(d.choice(0)) + (1 - theta) * fitted.evaluate(q) + 1e-12);
  }
}

TEST_CASE("serial and parallel fits agree") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const GroundTruth g = generate_feasible_dataset(5, 4, 4, 0.01, seed);
    BrpOptions serial, parallel;
    serial.execution = kernels::Execution::Serial;
    parallel.execution = kernels::Execution::Parallel;
    const BrpFit a = brp_max_margin(g.dataset, serial);
    const BrpFit b = brp_max_margin(g.dataset, parallel);
    CHECK(a.report.epsilon_star == b.report.epsilon_star);
    CHECK(a.profile.costs == b.profile.costs);
    const Matrix ra = niac_residuals(g.dataset, a.profile.utilities, a.profile.costs, kernels::Execution::Serial);
    const Matrix rb = niac_residuals(g.dataset, a.profile.utilities, a.profile.costs, kernels::Execution::Parallel);
    CHECK(ra == rb);
  }
}

TEST_CASE("profile validation") {
  const DecisionDataset d = fixtures::d2();
  CHECK(fixtures::error_code([&] { make_profile(d, {Matrix::Identity(2, 2)}, {0.1}); }) == ErrorCode::ProfileMismatch);
  // Identity for the noisy agent with these costs violates a cycle row.
  CHECK(fixtures::error_code([&] {
          make_profile(d, {Matrix::Identity(2, 2), Matrix::Identity(2, 2)}, {0.05, 0.2});
        }) == ErrorCode::InvalidArgument);
}
