#pragma once

#include <cstddef>
#include <vector>

#include "umri/types.hpp"

namespace umri {

/// One anchor of the reconstructed information cost: the in-sample strategy it
/// is anchored at, its cost there, and the weight matrix G(x,a) it charges
/// (prior(x) u(x,a), possibly divided by a per-agent sensitivity).
struct CostPiece {
  double offset = 0.0;
  Matrix reference;
  Matrix gradient;
};

/// Convex information-acquisition cost built as a maximum over anchors.
///
/// evaluate() is the exact reconstruction
///     C(p) = max_k offset_k + Sum_a max_b Sum_x G_k(x,b) p(a|x) - <G_k, p_k>,
/// which is itself a max of affine maps. evaluate_affine() keeps only the
/// b = a selection, giving the linear pieces offset_k + <G_k, p - p_k> that the
/// prediction LP uses. The two agree at every anchor whose strategy is
/// best-response consistent, and both return offset_k there.
class PiecewiseAffineCost {
 public:
  PiecewiseAffineCost() = default;
  explicit PiecewiseAffineCost(std::vector<CostPiece> pieces);

  double evaluate(const Matrix& p) const;
  double evaluate_affine(const Matrix& p) const;

  /// Value of the affine form of piece k at p.
  double affine_piece(std::size_t k, const Matrix& p) const;

  const std::vector<CostPiece>& pieces() const { return pieces_; }
  std::size_t size() const { return pieces_.size(); }

 private:
  std::vector<CostPiece> pieces_;
  std::vector<double> anchor_values_;  // <G_k, p_k>
};

}  // namespace umri
