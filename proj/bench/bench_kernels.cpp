// Serial reference kernels against their OpenMP versions, plus one end-to-end
// fit at each execution mode.
#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "umri/brp.hpp"
#include "umri/kernels.hpp"
#include "umri/synth.hpp"

namespace {

using umri::Matrix;
using umri::kernels::DenseRows;
using umri::kernels::Execution;

std::vector<double> random_buffer(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

template <Execution exec>
void BM_Eliminate(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0));
  const std::size_t cols = 2 * rows;
  const std::vector<double> original = random_buffer(rows * cols, 1);
  std::vector<double> work = original;
  const DenseRows t{work, rows, cols};
  std::size_t pivot = 0;
  for (auto _ : state) {
    state.PauseTiming();
    // Keep magnitudes bounded across iterations.
    if (++pivot == rows) {
      work = original;
      pivot = 0;
    }
    double* p = t.row(pivot);
    const double scale = 1.0 / (p[pivot] == 0.0 ? 1.0 : p[pivot]);
    for (std::size_t c = 0; c < cols; ++c) p[c] *= scale;
    state.ResumeTiming();
    umri::kernels::eliminate(t, pivot, pivot, exec);
    benchmark::DoNotOptimize(work.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(rows * cols));
}

template <Execution exec>
void BM_CrossValues(benchmark::State& state) {
  const auto agents = static_cast<std::size_t>(state.range(0));
  const auto states = static_cast<std::size_t>(state.range(1));
  std::vector<Matrix> joints, utilities;
  for (std::size_t k = 0; k < agents; ++k) {
    Matrix j = Matrix::Random(static_cast<Eigen::Index>(states), static_cast<Eigen::Index>(states)).cwiseAbs();
    joints.push_back(j / j.sum());
    utilities.push_back(Matrix::Random(static_cast<Eigen::Index>(states), static_cast<Eigen::Index>(states)));
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(umri::kernels::cross_values(joints, utilities, exec));
  }
}

template <Execution exec>
void BM_BrpFit(benchmark::State& state) {
  const auto states = static_cast<std::size_t>(state.range(0));
  const umri::GroundTruth g = umri::generate_feasible_dataset(5, states, states, 0.01, 3);
  umri::BrpOptions options;
  options.execution = exec;
  for (auto _ : state) {
    benchmark::DoNotOptimize(umri::brp_max_margin(g.dataset, options).report.epsilon_star);
  }
}

}  // namespace

BENCHMARK(BM_Eliminate<Execution::Serial>)->Arg(64)->Arg(256)->Arg(1024);
BENCHMARK(BM_Eliminate<Execution::Parallel>)->Arg(64)->Arg(256)->Arg(1024);
BENCHMARK(BM_CrossValues<Execution::Serial>)->Args({20, 10})->Args({200, 10});
BENCHMARK(BM_CrossValues<Execution::Parallel>)->Args({20, 10})->Args({200, 10});
BENCHMARK(BM_BrpFit<Execution::Serial>)->Arg(4)->Arg(6)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_BrpFit<Execution::Parallel>)->Arg(4)->Arg(6)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
