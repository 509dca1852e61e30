#include "umri/kernels.hpp"

#include <omp.h>

#include "umri/dataset.hpp"
#include "umri/error.hpp"

namespace umri::kernels {

namespace {

// Below this many touched entries a parallel region costs more than it saves.
constexpr std::size_t kParallelThreshold = 1 << 14;

inline void eliminate_row(double* __restrict dst, const double* __restrict src, std::size_t cols,
                          std::size_t pivot_col) {
  const double f = dst[pivot_col];
  if (f == 0.0) return;
  for (std::size_t j = 0; j < cols; ++j) dst[j] -= f * src[j];
  dst[pivot_col] = 0.0;
}

void check_pairs(std::span<const Matrix> joints, std::span<const Matrix> utilities) {
  if (joints.size() != utilities.size()) {
    throw Error(ErrorCode::DimensionMismatch, "need one utility per joint");
  }
}

}  // namespace

void eliminate_serial(DenseRows t, std::size_t pivot_row, std::size_t pivot_col) {
  const double* src = t.row(pivot_row);
  for (std::size_t i = 0; i < t.rows; ++i) {
    if (i == pivot_row) continue;
    eliminate_row(t.row(i), src, t.cols, pivot_col);
  }
}

void eliminate_parallel(DenseRows t, std::size_t pivot_row, std::size_t pivot_col) {
  const double* src = t.row(pivot_row);
  const auto rows = static_cast<std::ptrdiff_t>(t.rows);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < rows; ++i) {
    if (static_cast<std::size_t>(i) == pivot_row) continue;
    eliminate_row(t.row(static_cast<std::size_t>(i)), src, t.cols, pivot_col);
  }
}

void eliminate(DenseRows t, std::size_t pivot_row, std::size_t pivot_col, Execution exec) {
  if (exec == Execution::Parallel && t.rows * t.cols >= kParallelThreshold &&
      omp_get_max_threads() > 1) {
    eliminate_parallel(t, pivot_row, pivot_col);
  } else {
    eliminate_serial(t, pivot_row, pivot_col);
  }
}

Matrix cross_values_serial(std::span<const Matrix> joints, std::span<const Matrix> utilities) {
  check_pairs(joints, utilities);
  const auto n = static_cast<Eigen::Index>(joints.size());
  Matrix g(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index k = 0; k < n; ++k) {
      g(j, k) = expected_value_of_joint(joints[static_cast<std::size_t>(j)],
                                        utilities[static_cast<std::size_t>(k)]);
    }
  }
  return g;
}

Matrix cross_values_parallel(std::span<const Matrix> joints, std::span<const Matrix> utilities) {
  check_pairs(joints, utilities);
  const auto n = static_cast<Eigen::Index>(joints.size());
  Matrix g(n, n);
  const std::ptrdiff_t cells = static_cast<std::ptrdiff_t>(n * n);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t c = 0; c < cells; ++c) {
    const Eigen::Index j = c / n;
    const Eigen::Index k = c % n;
    g(j, k) = expected_value_of_joint(joints[static_cast<std::size_t>(j)],
                                      utilities[static_cast<std::size_t>(k)]);
  }
  return g;
}

Matrix cross_values(std::span<const Matrix> joints, std::span<const Matrix> utilities,
                    Execution exec) {
  if (exec == Execution::Parallel && joints.size() >= 8 && omp_get_max_threads() > 1) {
    return cross_values_parallel(joints, utilities);
  }
  return cross_values_serial(joints, utilities);
}

}  // namespace umri::kernels
