#include "umri/cost.hpp"

#include <algorithm>
#include <limits>

#include "umri/error.hpp"

namespace umri {

PiecewiseAffineCost::PiecewiseAffineCost(std::vector<CostPiece> pieces)
    : pieces_(std::move(pieces)) {
  if (pieces_.empty()) throw Error(ErrorCode::InvalidArgument, "cost needs at least one piece");
  const auto rows = pieces_.front().reference.rows();
  const auto cols = pieces_.front().reference.cols();
  for (const auto& p : pieces_) {
    if (p.reference.rows() != rows || p.reference.cols() != cols ||
        p.gradient.rows() != rows || p.gradient.cols() != cols) {
      throw Error(ErrorCode::DimensionMismatch, "cost pieces disagree on shape");
    }
    anchor_values_.push_back(p.gradient.cwiseProduct(p.reference).sum());
  }
}

namespace {

void check_shape(const CostPiece& piece, const Matrix& p) {
  if (p.rows() != piece.reference.rows() || p.cols() != piece.reference.cols()) {
    throw Error(ErrorCode::DimensionMismatch, "strategy shape does not match cost");
  }
}

}  // namespace

double PiecewiseAffineCost::affine_piece(std::size_t k, const Matrix& p) const {
  const CostPiece& piece = pieces_.at(k);
  check_shape(piece, p);
  return piece.offset + piece.gradient.cwiseProduct(p).sum() - anchor_values_[k];
}

double PiecewiseAffineCost::evaluate_affine(const Matrix& p) const {
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < pieces_.size(); ++k) best = std::max(best, affine_piece(k, p));
  return best;
}

double PiecewiseAffineCost::evaluate(const Matrix& p) const {
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < pieces_.size(); ++k) {
    const CostPiece& piece = pieces_[k];
    check_shape(piece, p);
    // scores(a, b) = Sum_x p(a|x) G(x,b)
    const Matrix scores = p.transpose() * piece.gradient;
    double value = 0.0;
    for (Eigen::Index a = 0; a < scores.rows(); ++a) value += scores.row(a).maxCoeff();
    best = std::max(best, piece.offset + value - anchor_values_[k]);
  }
  return best;
}

}  // namespace umri
