#pragma once

#include <Eigen/Dense>

namespace umri {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Box floor realizing the strict "u > 0" and "c > 0" requirements.
inline constexpr double kPositiveFloor = 1e-6;
// A margin at or below this value counts as a failed (degenerate) test.
inline constexpr double kDegeneracyTol = 1e-7;
// Raw probability rows may drift this far from 1 and still be renormalized.
inline constexpr double kRenormalizeTol = 1e-6;
// Post-validation stochasticity tolerance.
inline constexpr double kStochasticTol = 1e-9;
inline constexpr double kDefaultMarginFraction = 0.5;

}  // namespace umri
