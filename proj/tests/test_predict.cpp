#include <cmath>

#include "doctest.h"
#include "fixtures.hpp"
#include "oracle.hpp"
#include "umri/error.hpp"
#include "umri/predict.hpp"
#include "umri/synth.hpp"

using namespace umri;

namespace {

NoiseFamily small_family(std::uint64_t seed) {
  const std::vector<double> etas = default_etas(11);
  const NoiseFamilyTruth t = make_noise_family_truth(3, etas.front(), etas.back(), seed);
  return fit_family(sample_noise_family(t, etas), etas);
}

}  // namespace

TEST_CASE("grid and bracketing") {
  const std::vector<double> etas = default_etas(11);
  REQUIRE(etas.size() == 11);
  CHECK(etas.front() == 1.0);
  CHECK(etas.back() == doctest::Approx(2.0));

  const Bracket mid = locate(etas, 1.05);
  CHECK(mid.lower == 0);
  CHECK(mid.weight_lower == doctest::Approx(0.5));
  CHECK(mid.weight_lower + mid.weight_upper == doctest::Approx(1.0).epsilon(1e-15));
  const Bracket end = locate(etas, 2.0);
  CHECK(end.weight_lower + end.weight_upper == 1.0);
  CHECK(fixtures::error_code([&] { locate(etas, 2.01); }) == ErrorCode::OutOfRange);
  CHECK(fixtures::error_code([&] { locate(etas, 0.99); }) == ErrorCode::OutOfRange);
}

TEST_CASE("fitting a family") {
  const NoiseFamily f = small_family(1);
  CHECK(f.cost.size() == 11);
  for (std::size_t k = 0; k < 11; ++k)
    CHECK(f.cost.evaluate(f.dataset.choice(k)) == doctest::Approx(f.fitted.costs[k]).epsilon(1e-8));

  const std::vector<double> etas = default_etas(2);
  const NoiseFamilyTruth t = make_noise_family_truth(3, 1.0, 1.1, 2);
  const NoiseFamily two = fit_family(sample_noise_family(t, etas), etas);
  for (std::size_t k = 0; k < 2; ++k)
    CHECK(two.cost.evaluate(two.dataset.choice(k)) == doctest::Approx(two.fitted.costs[k]).epsilon(1e-8));

  CHECK(fixtures::error_code([&] { fit_family(f.dataset, {1.0, 1.0, 1.2, 1.3, 1.4, 1.5, 1.6, 1.7, 1.8, 1.9, 2.0}); }) ==
        ErrorCode::InvalidArgument);
  CHECK(fixtures::error_code([&] { fit_family(f.dataset, {1.0, 2.0}); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("utility interpolation") {
  const NoiseFamily f = small_family(2);
  for (std::size_t g = 0; g < 11; ++g) CHECK(interpolate_utility(f, f.etas[g]) == f.fitted.utilities[g]);
  const Matrix half = interpolate_utility(f, 1.05);
  CHECK((half - 0.5 * (f.fitted.utilities[0] + f.fitted.utilities[1])).cwiseAbs().maxCoeff() < 1e-12);
  const Matrix q = interpolate_utility(f, 1.37);
  const Matrix& lo = f.fitted.utilities[3];
  const Matrix& hi = f.fitted.utilities[4];
  CHECK((q.array() >= lo.cwiseMin(hi).array() - 1e-15).all());
  CHECK((q.array() <= lo.cwiseMax(hi).array() + 1e-15).all());
  CHECK(fixtures::error_code([&] { interpolate_utility(f, 2.01); }) == ErrorCode::OutOfRange);
}

TEST_CASE("choice prediction") {
  const Vector mu = fixtures::uniform(3);
  const PiecewiseAffineCost zero({CostPiece{0.0, Matrix::Constant(3, 3, 1.0 / 3), Matrix::Zero(3, 3)}});
  const ChoicePrediction id = predict_choice(mu, zero, Matrix::Identity(3, 3));
  CHECK((id.choice - Matrix::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-9);
  CHECK(id.nias_consistent);

  // Constant utility: the prediction minimizes the cost alone.
  const NoiseFamily f = small_family(3);
  const ChoicePrediction flat = predict_choice(f, Matrix::Constant(3, 3, 0.5));
  CHECK((flat.choice.rowwise().sum() - Vector::Ones(3)).cwiseAbs().maxCoeff() < 1e-9);
  CHECK(flat.choice.minCoeff() >= -1e-12);
  double min_cost = 1e300;
  for (std::size_t k = 0; k < 11; ++k) min_cost = std::min(min_cost, f.cost.evaluate_affine(f.dataset.choice(k)));
  CHECK(f.cost.evaluate_affine(flat.choice) <= min_cost + 1e-9);

  // In-grid queries reproduce the fitted strategies.
  for (std::size_t g = 0; g < 11; ++g) {
    const PredictionOutcome out = predict_at(f, f.etas[g]);
    for (int x = 0; x < 3; ++x) {
      const double tv = 0.5 * (out.predicted_choice.row(x) - f.dataset.choice(g).row(x)).cwiseAbs().sum();
      CHECK(tv <= 2e-2);
    }
  }
}

TEST_CASE("scoring") {
  const Matrix p = fixtures::mat2(0.7, 0.3, 0.2, 0.8);
  const PredictionScore same = score_prediction(p, p, fixtures::uniform(2));
  CHECK(same.delta.cwiseAbs().maxCoeff() == 0.0);
  CHECK(same.kl == 0.0);

  Vector mu(2);
  mu << 1.0, 0.0;
  const PredictionScore one = score_prediction(fixtures::mat2(0.9, 0.1, 0.5, 0.5), fixtures::mat2(1.0, 0.0, 0.5, 0.5), mu);
  CHECK(one.kl == doctest::Approx(std::log(1.0 / 0.9)));
  CHECK(one.kl == doctest::Approx(0.10536).epsilon(1e-4));

  Rng rng(6);
  for (int trial = 0; trial < 30; ++trial) {
    const Matrix t = random_stochastic(3, 3, rng);
    const Matrix q = random_stochastic(3, 3, rng);
    const Vector w = random_stochastic(1, 3, rng).row(0).transpose();
    const PredictionScore s = score_prediction(q, t, w);
    CHECK(s.kl == doctest::Approx(oracle::kl(t, q, w)).epsilon(1e-12));
    CHECK(s.kl >= 0.0);
    for (int x = 0; x < 3; ++x) CHECK(s.delta(x) == doctest::Approx(std::abs(q(x, x) - t(x, x))));
  }

  CHECK(fixtures::error_code([&] { score_prediction(Matrix::Identity(2, 3), Matrix::Identity(2, 3), fixtures::uniform(2)); }) ==
        ErrorCode::NonSquare);
  CHECK(fixtures::error_code([&] { score_prediction(Matrix::Identity(2, 2), Matrix::Identity(3, 3), fixtures::uniform(2)); }) ==
        ErrorCode::ShapeMismatch);
}
