#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "umri/types.hpp"

// Data-parallel inner loops. Every kernel has a serial reference version with
// identical per-element arithmetic, so the two produce bit-identical output;
// tests compare them and bench/ times them.
namespace umri::kernels {

enum class Execution { Serial, Parallel };

/// Row-major dense matrix stored in a flat buffer.
struct DenseRows {
  std::span<double> data;
  std::size_t rows = 0;
  std::size_t cols = 0;

  double* row(std::size_t i) const { return data.data() + i * cols; }
};

/// Gauss-Jordan elimination of column `pivot_col` from every row except
/// `pivot_row`, which must already be scaled so its pivot entry is 1.
void eliminate_serial(DenseRows t, std::size_t pivot_row, std::size_t pivot_col);
void eliminate_parallel(DenseRows t, std::size_t pivot_row, std::size_t pivot_col);
void eliminate(DenseRows t, std::size_t pivot_row, std::size_t pivot_col, Execution exec);

/// Cross-value matrix G(j,k) = Sum_a max_b Sum_x joint_j(x,a) u_k(x,b).
Matrix cross_values_serial(std::span<const Matrix> joints, std::span<const Matrix> utilities);
Matrix cross_values_parallel(std::span<const Matrix> joints, std::span<const Matrix> utilities);
Matrix cross_values(std::span<const Matrix> joints, std::span<const Matrix> utilities,
                    Execution exec);

}  // namespace umri::kernels
