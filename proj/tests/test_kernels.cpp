#include <random>

#include "doctest.h"
#include "umri/kernels.hpp"
#include "umri/synth.hpp"

using namespace umri;

TEST_CASE("elimination matches the serial reference bit for bit") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (std::size_t n : {1u, 3u, 17u, 130u}) {
    std::vector<double> a(n * (n + 1));
    for (double& v : a) v = u(rng);
    const std::size_t pr = n / 2, pc = n / 3;
    const double pivot = a[pr * (n + 1) + pc];
    for (std::size_t c = 0; c <= n; ++c) a[pr * (n + 1) + c] /= pivot;
    std::vector<double> b = a;
    kernels::eliminate_serial({a, n, n + 1}, pr, pc);
    kernels::eliminate_parallel({b, n, n + 1}, pr, pc);
    CHECK(a == b);
    for (std::size_t r = 0; r < n; ++r)
      if (r != pr) CHECK(std::abs(a[r * (n + 1) + pc]) <= 1e-12);
  }
}

TEST_CASE("cross values match the serial reference and a direct sum") {
  Rng rng(2);
  for (std::size_t agents : {1u, 4u, 40u}) {
    std::vector<Matrix> joints, utilities;
    for (std::size_t k = 0; k < agents; ++k) {
      joints.push_back(random_stochastic(3, 4, rng) / 3.0);
      utilities.push_back(random_stochastic(3, 4, rng));
    }
    const Matrix s = kernels::cross_values_serial(joints, utilities);
    CHECK(s == kernels::cross_values_parallel(joints, utilities));
    const Matrix& q = joints.back();
    const Matrix& w = utilities.front();
    double g = 0.0;
    for (int a = 0; a < 4; ++a) {
      double best = -1e300;
      for (int b = 0; b < 4; ++b) {
        double v = 0.0;
        for (int x = 0; x < 3; ++x) v += q(x, a) * w(x, b);
        best = std::max(best, v);
      }
      g += best;
    }
    CHECK(s(static_cast<Eigen::Index>(agents - 1), 0) == doctest::Approx(g).epsilon(1e-14));
  }
}
