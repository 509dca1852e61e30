#include "umri/lp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "umri/error.hpp"

namespace umri {

std::size_t LinearProgram::add_variable(double lower, double upper, double objective,
                                        std::string name) {
  lower_.push_back(lower);
  upper_.push_back(upper);
  objective_.push_back(objective);
  names_.push_back(std::move(name));
  return lower_.size() - 1;
}

void LinearProgram::add_constraint(std::vector<Term> terms, double rhs) {
  constraints_.push_back(Constraint{std::move(terms), rhs});
}

void LinearProgram::set_objective(std::size_t var, double coef) { objective_.at(var) = coef; }

double LinearProgram::max_violation(const std::vector<double>& point) const {
  double worst = 0.0;
  for (std::size_t j = 0; j < lower_.size(); ++j) {
    worst = std::max({worst, lower_[j] - point[j], point[j] - upper_[j]});
  }
  for (const auto& row : constraints_) {
    double lhs = 0.0;
    for (const auto& t : row.terms) lhs += t.coef * point[t.var];
    worst = std::max(worst, lhs - row.rhs);
  }
  return worst;
}

void LinearProgram::check() const {
  for (std::size_t j = 0; j < lower_.size(); ++j) {
    if (!std::isfinite(lower_[j]) || !std::isfinite(upper_[j])) {
      throw Error(ErrorCode::InvalidArgument, "variable " + std::to_string(j) + " has an infinite bound");
    }
    if (lower_[j] > upper_[j]) {
      throw Error(ErrorCode::InvalidArgument, "variable " + std::to_string(j) + " has lower > upper");
    }
    if (!std::isfinite(objective_[j])) {
      throw Error(ErrorCode::InvalidArgument, "non-finite objective coefficient");
    }
  }
  for (const auto& row : constraints_) {
    if (!std::isfinite(row.rhs)) throw Error(ErrorCode::InvalidArgument, "non-finite rhs");
    for (const auto& t : row.terms) {
      if (t.var >= lower_.size() || !std::isfinite(t.coef)) {
        throw Error(ErrorCode::InvalidArgument, "bad constraint term");
      }
    }
  }
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();

// Working state of one solve. Columns are laid out as
//   [structural | slack per row | artificial per infeasible row].
// Structural variables are shifted to y = z - lower, so every column has
// bounds [0, upper_[j]]. The last tableau row holds the reduced costs.
class Tableau {
 public:
  Tableau(const LinearProgram& lp, const SimplexOptions& opt, std::vector<double>& storage)
      : lp_(lp), opt_(opt), storage_(storage) {}

  LpSolution run();
  // Picks up constraints appended to the program since the last solve and
  // re-optimizes from the current basis.
  LpSolution resume();

 private:
  void build();
  double* row(std::size_t i) { return storage_.data() + i * cols_; }
  double* cost_row() { return row(m_); }
  kernels::DenseRows view() { return {std::span<double>(storage_), m_ + 1, cols_}; }

  void load_costs(const std::vector<double>& costs);
  // Rebuilds B^-1 A, the basic values and the reduced costs from the
  // original rows, discarding accumulated elimination error.
  // With clamp, basic values are pulled into their bounds; without it they
  // stay raw so dual_cleanup can see the infeasibility.
  void reinvert(bool clamp = true);
  // Shifts the right-hand side so every basic variable sits strictly inside
  // its bounds, which breaks degenerate ties.
  void perturb();
  // Dual simplex from a dual-feasible basis until the basic values are back
  // within bounds.
  // Returns false when some row cannot be repaired, i.e. the rows are
  // infeasible.
  bool dual_cleanup();
  void pivot(std::size_t leave, std::size_t q);
  // B^-1 v, read off the slack columns of the tableau.
  Vector apply_inverse(const Vector& v) const;
  // Checks the basic values against the original rows, applying one
  // correction step if needed. False means the tableau has drifted.
  bool values_consistent(bool clamp);
  // Every 100 pivots: verify the basic values, refactoring when they have
  // drifted and in any case every 1000 pivots.
  void checkpoint(bool clamp);
  void append_rows(std::size_t first, std::size_t last);
  std::vector<double> phase2_costs() const;
  LpSolution finish();
  std::size_t ratio_test(std::size_t q, double dir, double& theta, bool& to_upper) const;
  // Returns false once no eligible entering column remains.
  bool iterate(double opt_tol);
  void optimize(const std::vector<double>& costs);
  std::vector<double> extract_point();
  bool refine(std::vector<double>& y);

  const LinearProgram& lp_;
  const SimplexOptions& opt_;
  std::vector<double>& storage_;

  std::size_t n_ = 0;  // structural
  std::size_t m_ = 0;  // rows
  std::size_t cols_ = 0;
  std::vector<double> rhs_;
  Matrix original_;           // signed rows, all columns
  Vector signed_rhs_;
  Vector work_rhs_;
  bool perturbed_ = false;
  bool perturb_used_ = false;
  std::vector<double> costs_;
  std::size_t since_reinvert_ = 0;
  std::size_t since_refactor_ = 0;
  std::vector<double> upper_;
  std::vector<bool> at_upper_;
  std::vector<std::size_t> basis_;
  std::vector<std::size_t> basic_row_;
  std::vector<double> beta_;
  std::vector<std::size_t> art_row_;  // artificial a -> row
  std::vector<std::size_t> art_col_;  // artificial a -> column
  std::vector<std::size_t> slack_col_;  // row -> slack column
  std::size_t iterations_ = 0;
  std::size_t max_iterations_ = 0;
  std::size_t streak_ = 0;
  bool randomized_ = false;
  std::mt19937_64 rng_{0x5eed};
  bool unbounded_ = false;
};

void Tableau::build() {
  n_ = lp_.num_variables();
  m_ = lp_.num_constraints();
  rhs_.assign(m_, 0.0);
  std::vector<int> sign(m_, 1);
  std::size_t artificials = 0;
  for (std::size_t i = 0; i < m_; ++i) {
    const auto& c = lp_.constraints()[i];
    double r = c.rhs;
    for (const auto& t : c.terms) r -= t.coef * lp_.lower()[t.var];
    rhs_[i] = r;
    if (r < -opt_.feasibility_tol) {
      sign[i] = -1;
      ++artificials;
    }
  }
  cols_ = n_ + m_ + artificials;
  storage_.assign((m_ + 1) * cols_, 0.0);
  upper_.assign(cols_, kInf);
  at_upper_.assign(cols_, false);
  basis_.assign(m_, kNone);
  basic_row_.assign(cols_, kNone);
  beta_.assign(m_, 0.0);
  art_row_.clear();
  art_col_.clear();
  slack_col_.resize(m_);

  for (std::size_t j = 0; j < n_; ++j) upper_[j] = lp_.upper()[j] - lp_.lower()[j];

  std::size_t next_art = n_ + m_;
  for (std::size_t i = 0; i < m_; ++i) {
    double* r = row(i);
    const double s = sign[i];
    for (const auto& t : lp_.constraints()[i].terms) r[t.var] += s * t.coef;
    r[n_ + i] = s;
    slack_col_[i] = n_ + i;
    if (sign[i] > 0) {
      basis_[i] = n_ + i;
      beta_[i] = std::max(rhs_[i], 0.0);
    } else {
      r[next_art] = 1.0;
      art_row_.push_back(i);
      art_col_.push_back(next_art);
      basis_[i] = next_art;
      beta_[i] = -rhs_[i];
      ++next_art;
    }
    basic_row_[basis_[i]] = i;
  }
  max_iterations_ = opt_.max_iterations ? opt_.max_iterations : 50 * (m_ + cols_ + 1);
  original_.resize(static_cast<Eigen::Index>(m_), static_cast<Eigen::Index>(cols_));
  signed_rhs_.resize(static_cast<Eigen::Index>(m_));
  for (std::size_t i = 0; i < m_; ++i) {
    for (std::size_t j = 0; j < cols_; ++j) {
      original_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = row(i)[j];
    }
    signed_rhs_(static_cast<Eigen::Index>(i)) = sign[i] * rhs_[i];
  }
  work_rhs_ = signed_rhs_;
}

void Tableau::reinvert(bool clamp) {
  since_reinvert_ = 0;
  since_refactor_ = 0;
  if (m_ == 0) return;
  const auto m = static_cast<Eigen::Index>(m_);
  Matrix b(m, m);
  for (std::size_t i = 0; i < m_; ++i) {
    b.col(static_cast<Eigen::Index>(i)) = original_.col(static_cast<Eigen::Index>(basis_[i]));
  }
  Vector r = work_rhs_;
  for (std::size_t j = 0; j < cols_; ++j) {
    if (basic_row_[j] == kNone && at_upper_[j] && std::isfinite(upper_[j]) && upper_[j] > 0.0) {
      r -= upper_[j] * original_.col(static_cast<Eigen::Index>(j));
    }
  }
  Eigen::PartialPivLU<Matrix> lu(b);
  const Matrix t = lu.solve(original_);
  const Vector x = lu.solve(r);
  if (!t.allFinite() || !x.allFinite()) {
    throw Error(ErrorCode::NumericalFailure, "singular simplex basis");
  }
  for (std::size_t i = 0; i < m_; ++i) {
    double* rw = row(i);
    for (std::size_t j = 0; j < cols_; ++j) {
      rw[j] = t(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    }
    for (std::size_t k = 0; k < m_; ++k) rw[basis_[k]] = k == i ? 1.0 : 0.0;
    double v = x(static_cast<Eigen::Index>(i));
    const double hi = upper_[basis_[i]];
    if (clamp || (v < 0.0 && v > -opt_.feasibility_tol)) v = std::max(v, 0.0);
    if (clamp || (v > hi && v < hi + opt_.feasibility_tol)) v = std::min(v, hi);
    beta_[i] = v;
  }
  load_costs(costs_);
}

void Tableau::perturb() {
  perturbed_ = true;
  perturb_used_ = true;
  std::uniform_real_distribution<double> unit(1.0, 2.0);
  for (std::size_t i = 0; i < m_; ++i) {
    const double hi = upper_[basis_[i]];
    const double delta = 1e-7 * unit(rng_);
    if (hi < 4.0 * delta) continue;
    const double target = beta_[i] + delta <= hi - delta ? beta_[i] + delta : beta_[i] - delta;
    work_rhs_ += (target - beta_[i]) * original_.col(static_cast<Eigen::Index>(basis_[i]));
    beta_[i] = target;
  }
}

void Tableau::pivot(std::size_t leave, std::size_t q) {
  const std::size_t out = basis_[leave];
  basic_row_[out] = kNone;
  basis_[leave] = q;
  basic_row_[q] = leave;
  at_upper_[q] = false;
  double* pr = row(leave);
  const double inv = 1.0 / pr[q];
  for (std::size_t j = 0; j < cols_; ++j) pr[j] *= inv;
  pr[q] = 1.0;
  kernels::eliminate(view(), leave, q, opt_.execution);
}

bool Tableau::dual_cleanup() {
  const double tol = opt_.feasibility_tol;
  for (;;) {
    std::size_t r = kNone;
    double worst = tol;
    for (std::size_t i = 0; i < m_; ++i) {
      const double v = std::max(-beta_[i], beta_[i] - upper_[basis_[i]]);
      if (v > worst) {
        worst = v;
        r = i;
      }
    }
    if (r == kNone) return true;
    const bool below = beta_[r] < 0.0;
    const double target = below ? 0.0 : upper_[basis_[r]];
    const double* pr = row(r);
    const double* d = cost_row();

    std::size_t q = kNone;
    double best_ratio = kInf;
    double best_alpha = 0.0;
    for (std::size_t j = 0; j < cols_; ++j) {
      if (basic_row_[j] != kNone || upper_[j] <= 0.0) continue;
      const double alpha = pr[j];
      if (std::abs(alpha) <= opt_.pivot_tol) continue;
      // x_r moves by -alpha * dx_j; it has to move toward the violated bound.
      const double dx_sign = at_upper_[j] ? -1.0 : 1.0;
      const double move = -alpha * dx_sign;
      if (below ? move <= 0.0 : move >= 0.0) continue;
      const double ratio = std::max(at_upper_[j] ? d[j] : -d[j], 0.0) / std::abs(alpha);
      if (ratio < best_ratio - 1e-12 ||
          (ratio <= best_ratio + 1e-12 && std::abs(alpha) > best_alpha)) {
        best_ratio = std::min(ratio, best_ratio);
        best_alpha = std::abs(alpha);
        q = j;
      }
    }
    if (q == kNone) return false;
    const double step = (beta_[r] - target) / pr[q];
    const double entering = (at_upper_[q] ? upper_[q] : 0.0) + step;
    for (std::size_t i = 0; i < m_; ++i) {
      const double a = row(i)[q];
      if (a != 0.0) beta_[i] -= a * step;
    }
    at_upper_[basis_[r]] = !below;
    pivot(r, q);
    beta_[r] = entering;
    ++iterations_;
    checkpoint(false);
    if (iterations_ > max_iterations_) {
      throw Error(ErrorCode::NumericalFailure,
                  "simplex iteration limit " + std::to_string(max_iterations_) + " reached");
    }
  }
}

void Tableau::load_costs(const std::vector<double>& costs) {
  double* d = cost_row();
  for (std::size_t j = 0; j < cols_; ++j) d[j] = costs[j];
  for (std::size_t i = 0; i < m_; ++i) {
    const double cb = costs[basis_[i]];
    if (cb == 0.0) continue;
    const double* r = row(i);
    for (std::size_t j = 0; j < cols_; ++j) d[j] -= cb * r[j];
  }
  for (std::size_t i = 0; i < m_; ++i) d[basis_[i]] = 0.0;
}

bool Tableau::iterate(double opt_tol) {
  const double* d = cost_row();

  // Entering column: Dantzig, or during a degenerate streak a uniformly
  // drawn improving column from a fixed-seed generator.
  std::size_t q = kNone;
  double best = 0.0;
  std::size_t improving = 0;
  for (std::size_t j = 0; j < cols_; ++j) {
    if (basic_row_[j] != kNone || upper_[j] <= 0.0) continue;
    const double gain = at_upper_[j] ? -d[j] : d[j];
    if (gain <= opt_tol) continue;
    ++improving;
    if (gain > best) {
      best = gain;
      q = j;
    }
  }
  if (q == kNone) return false;
  if (randomized_ && improving > 1) {
    std::size_t pick = std::uniform_int_distribution<std::size_t>(0, improving - 1)(rng_);
    for (std::size_t j = 0; j < cols_; ++j) {
      if (basic_row_[j] != kNone || upper_[j] <= 0.0) continue;
      const double gain = at_upper_[j] ? -d[j] : d[j];
      if (gain <= opt_tol) continue;
      if (pick-- == 0) {
        q = j;
        break;
      }
    }
  }

  const double dir = at_upper_[q] ? -1.0 : 1.0;

  double theta = 0.0;
  bool leave_to_upper = false;
  const std::size_t leave = ratio_test(q, dir, theta, leave_to_upper);
  if (!std::isfinite(theta)) {
    unbounded_ = true;
    return false;
  }

  if (theta <= 1e-12) {
    if (++streak_ >= opt_.degenerate_streak) {
      if (!perturb_used_) {
        perturb();
        streak_ = 0;
      } else {
        randomized_ = true;
      }
    }
  } else {
    streak_ = 0;
    randomized_ = false;
  }

  for (std::size_t i = 0; i < m_; ++i) {
    const double a = row(i)[q];
    if (a != 0.0) beta_[i] = std::max(beta_[i] - dir * a * theta, 0.0);
  }

  if (leave == kNone) {
    at_upper_[q] = !at_upper_[q];
  } else {
    const double entering_value = dir > 0 ? theta : upper_[q] - theta;
    at_upper_[basis_[leave]] = leave_to_upper;
    pivot(leave, q);
    beta_[leave] = entering_value;
  }
  ++iterations_;
  checkpoint(true);
  if (iterations_ > max_iterations_) {
    throw Error(ErrorCode::NumericalFailure,
                "simplex iteration limit " + std::to_string(max_iterations_) + " reached");
  }
  return true;
}

// Returns the leaving row, or kNone for a bound flip of the entering column.
// Harris's two-pass test: find the largest step allowed when every bound is
// relaxed by the feasibility tolerance, then pick the largest pivot among the
// rows that block within it (ties to the lowest basic index). Taking the
// smallest-index row on degenerate ties instead, as textbook Bland does,
// accepts tiny pivots and drives the basis toward singularity.
std::size_t Tableau::ratio_test(std::size_t q, double dir, double& theta, bool& to_upper) const {
  auto distance = [&](std::size_t i, double alpha, bool& up) {
    if (alpha > opt_.pivot_tol) {
      up = false;
      return beta_[i];
    }
    if (alpha < -opt_.pivot_tol && std::isfinite(upper_[basis_[i]])) {
      up = true;
      return upper_[basis_[i]] - beta_[i];
    }
    return kInf;
  };
  auto rows = [&](std::size_t i) { return storage_[i * cols_ + q] * dir; };

  std::size_t leave = kNone;
  to_upper = false;
  double relaxed = kInf;
  double exact_min = kInf;
  for (std::size_t i = 0; i < m_; ++i) {
    const double alpha = rows(i);
    bool up = false;
    const double dist = distance(i, alpha, up);
    if (!std::isfinite(dist)) continue;
    relaxed = std::min(relaxed, (std::max(dist, 0.0) + opt_.feasibility_tol) / std::abs(alpha));
    exact_min = std::min(exact_min, std::max(dist, 0.0) / std::abs(alpha));
  }
  if (upper_[q] <= exact_min) {
    theta = upper_[q];
    return kNone;
  }
  double best_pivot = 0.0;
  for (std::size_t i = 0; i < m_; ++i) {
    const double alpha = rows(i);
    bool up = false;
    const double dist = distance(i, alpha, up);
    if (!std::isfinite(dist)) continue;
    const double limit = std::max(dist, 0.0) / std::abs(alpha);
    if (limit > relaxed) continue;
    const double pivot = std::abs(alpha);
    if (pivot > best_pivot || (pivot == best_pivot && basis_[i] < basis_[leave])) {
      best_pivot = pivot;
      leave = i;
      to_upper = up;
      theta = limit;
    }
  }
  if (leave == kNone) theta = upper_[q];
  return leave;
}

void Tableau::optimize(const std::vector<double>& costs) {
  double scale = 0.0;
  for (double c : costs) scale = std::max(scale, std::abs(c));
  if (scale == 0.0) return;
  costs_ = costs;
  load_costs(costs);
  streak_ = 0;
  randomized_ = false;
  perturb_used_ = false;
  const double tol = opt_.optimality_tol * scale;
  for (;;) {
    while (iterate(tol)) {
    }
    if (unbounded_) break;
    if (perturbed_) {
      // Back to the true right-hand side; the basis stays dual feasible.
      perturbed_ = false;
      const Vector shift = apply_inverse(work_rhs_ - signed_rhs_);
      work_rhs_ = signed_rhs_;
      for (std::size_t i = 0; i < m_; ++i) beta_[i] -= shift(static_cast<Eigen::Index>(i));
      if (!dual_cleanup()) {
        throw Error(ErrorCode::NumericalFailure, "lost feasibility removing the perturbation");
      }
      continue;
    }
    if (since_reinvert_ == 0 || values_consistent(true)) break;
    reinvert();
    if (unbounded_) break;
  }
}

Vector Tableau::apply_inverse(const Vector& v) const {
  Vector out = Vector::Zero(static_cast<Eigen::Index>(m_));
  for (std::size_t i = 0; i < m_; ++i) {
    const double vi = v(static_cast<Eigen::Index>(i));
    if (vi == 0.0) continue;
    const std::size_t s = slack_col_[i];
    const double f = vi * original_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(s));
    for (std::size_t r = 0; r < m_; ++r) out(static_cast<Eigen::Index>(r)) += f * storage_[r * cols_ + s];
  }
  return out;
}

void Tableau::checkpoint(bool clamp) {
  ++since_refactor_;
  if (++since_reinvert_ < 100) return;
  if (since_refactor_ < 1000 && values_consistent(clamp)) {
    since_reinvert_ = 0;
    return;
  }
  reinvert(clamp);
}

bool Tableau::values_consistent(bool clamp) {
  const double tight = 1e-3 * opt_.feasibility_tol * (1.0 + work_rhs_.cwiseAbs().maxCoeff());
  auto residual = [&] {
    const std::vector<double> y = extract_point();
    const Eigen::Map<const Vector> x(y.data(), static_cast<Eigen::Index>(y.size()));
    return Vector(work_rhs_ - original_ * x);
  };
  Vector res = residual();
  if (res.cwiseAbs().maxCoeff() <= tight) return true;
  const Vector fix = apply_inverse(res);
  for (std::size_t i = 0; i < m_; ++i) {
    double& b = beta_[i];
    b += fix(static_cast<Eigen::Index>(i));
    if (!clamp) continue;
    const double hi = upper_[basis_[i]];
    if (b < -opt_.feasibility_tol || b > hi + opt_.feasibility_tol) return false;
    b = std::clamp(b, 0.0, hi);
  }
  res = residual();
  return res.cwiseAbs().maxCoeff() <= 1e2 * tight;
}

std::vector<double> Tableau::extract_point() {
  std::vector<double> y(cols_, 0.0);
  for (std::size_t j = 0; j < cols_; ++j) {
    if (at_upper_[j] && std::isfinite(upper_[j])) y[j] = upper_[j];
  }
  for (std::size_t i = 0; i < m_; ++i) y[basis_[i]] = beta_[i];
  return y;
}

// Recomputes basic values from the original rows: B y_B = rhs - N y_N.
bool Tableau::refine(std::vector<double>& y) {
  if (m_ == 0) return true;
  const auto m = static_cast<Eigen::Index>(m_);
  Matrix b = Matrix::Zero(m, m);
  Vector r(m);
  for (std::size_t i = 0; i < m_; ++i) {
    r(static_cast<Eigen::Index>(i)) = rhs_[i];
    for (const auto& t : lp_.constraints()[i].terms) {
      const std::size_t pos = basic_row_[t.var];
      if (pos != kNone) {
        b(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(pos)) += t.coef;
      } else {
        r(static_cast<Eigen::Index>(i)) -= t.coef * y[t.var];
      }
    }
    const std::size_t slack = slack_col_[i];
    if (basic_row_[slack] != kNone) {
      b(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(basic_row_[slack])) += 1.0;
    } else {
      r(static_cast<Eigen::Index>(i)) -= y[slack];
    }
  }
  for (std::size_t a = 0; a < art_row_.size(); ++a) {
    const std::size_t col = art_col_[a];
    const auto i = static_cast<Eigen::Index>(art_row_[a]);
    if (basic_row_[col] != kNone) {
      b(i, static_cast<Eigen::Index>(basic_row_[col])) -= 1.0;
    } else {
      r(i) += y[col];
    }
  }
  Eigen::PartialPivLU<Matrix> lu(b);
  const Vector xb = lu.solve(r);
  if (!xb.allFinite()) return false;
  for (std::size_t i = 0; i < m_; ++i) {
    double v = xb(static_cast<Eigen::Index>(i));
    const double hi = upper_[basis_[i]];
    if (v < 0.0 && v > -opt_.feasibility_tol) v = 0.0;
    if (v > hi && v < hi + opt_.feasibility_tol) v = hi;
    y[basis_[i]] = v;
  }
  return true;
}

LpSolution Tableau::run() {
  build();

  if (!art_row_.empty()) {
    std::vector<double> phase1(cols_, 0.0);
    for (std::size_t col : art_col_) phase1[col] = -1.0;
    optimize(phase1);
    if (unbounded_) throw Error(ErrorCode::NumericalFailure, "unbounded phase-one ray");
    double infeasibility = 0.0;
    double rhs_scale = 1.0;
    for (double r : rhs_) rhs_scale = std::max(rhs_scale, std::abs(r));
    for (std::size_t col : art_col_) {
      if (basic_row_[col] != kNone) infeasibility += beta_[basic_row_[col]];
    }
    if (infeasibility > opt_.feasibility_tol * rhs_scale) {
      LpSolution out;
      out.status = LpStatus::Infeasible;
      out.iterations = iterations_;
      return out;
    }
    for (std::size_t col : art_col_) {
      upper_[col] = 0.0;
      at_upper_[col] = false;
      if (basic_row_[col] != kNone) beta_[basic_row_[col]] = 0.0;
    }
  }

  optimize(phase2_costs());
  return finish();
}

std::vector<double> Tableau::phase2_costs() const {
  std::vector<double> c(cols_, 0.0);
  for (std::size_t j = 0; j < n_; ++j) c[j] = lp_.objective()[j];
  return c;
}

LpSolution Tableau::resume() {
  const std::size_t before = iterations_;
  append_rows(m_, lp_.num_constraints());
  max_iterations_ = iterations_ + (opt_.max_iterations ? opt_.max_iterations : 50 * (m_ + cols_ + 1));
  costs_ = phase2_costs();
  if (!dual_cleanup()) {
    LpSolution out;
    out.status = LpStatus::Infeasible;
    out.iterations = iterations_ - before;
    return out;
  }
  optimize(costs_);
  LpSolution out = finish();
  out.iterations = iterations_ - before;
  return out;
}

void Tableau::append_rows(std::size_t first, std::size_t last) {
  const std::size_t added = last - first;
  if (added == 0) return;
  const std::vector<double> y = extract_point();
  const std::size_t old_m = m_;
  const std::size_t old_cols = cols_;

  // Widen every row by the new slack columns and insert the rows before the
  // reduced costs.
  std::vector<double> next((old_m + added + 1) * (old_cols + added), 0.0);
  for (std::size_t i = 0; i <= old_m; ++i) {
    const std::size_t to = i < old_m ? i : old_m + added;
    std::copy_n(storage_.data() + i * old_cols, old_cols, next.data() + to * (old_cols + added));
  }
  storage_.swap(next);
  cols_ = old_cols + added;
  m_ = old_m + added;

  original_.conservativeResize(static_cast<Eigen::Index>(m_), static_cast<Eigen::Index>(cols_));
  original_.bottomRows(static_cast<Eigen::Index>(added)).setZero();
  original_.rightCols(static_cast<Eigen::Index>(added)).setZero();
  signed_rhs_.conservativeResize(static_cast<Eigen::Index>(m_));

  for (std::size_t n = 0; n < added; ++n) {
    const auto& c = lp_.constraints()[first + n];
    const std::size_t i = old_m + n;
    const std::size_t col = old_cols + n;
    const auto ei = static_cast<Eigen::Index>(i);
    double r = c.rhs;
    double slack = 0.0;
    for (const auto& t : c.terms) {
      r -= t.coef * lp_.lower()[t.var];
      slack += t.coef * y[t.var];
    }
    slack = r - slack;

    double* nr = row(i);
    for (const auto& t : c.terms) {
      nr[t.var] += t.coef;
      original_(ei, static_cast<Eigen::Index>(t.var)) += t.coef;
    }
    nr[col] = 1.0;
    original_(ei, static_cast<Eigen::Index>(col)) = 1.0;
    for (std::size_t b = 0; b < old_m; ++b) {
      const double f = nr[basis_[b]];
      if (f == 0.0) continue;
      const double* rb = row(b);
      for (std::size_t j = 0; j < cols_; ++j) nr[j] -= f * rb[j];
      nr[basis_[b]] = 0.0;
    }

    signed_rhs_(ei) = r;
    rhs_.push_back(r);
    upper_.push_back(kInf);
    at_upper_.push_back(false);
    basic_row_.push_back(i);
    basis_.push_back(col);
    beta_.push_back(slack);
    costs_.push_back(0.0);
    slack_col_.push_back(col);
  }
  work_rhs_ = signed_rhs_;
}

LpSolution Tableau::finish() {
  if (unbounded_) {
    LpSolution out;
    out.status = LpStatus::Unbounded;
    out.iterations = iterations_;
    return out;
  }

  const std::vector<double> raw = extract_point();

  auto to_original = [&](const std::vector<double>& y) {
    std::vector<double> z(n_);
    for (std::size_t j = 0; j < n_; ++j) {
      z[j] = std::clamp(lp_.lower()[j] + y[j], lp_.lower()[j], lp_.upper()[j]);
    }
    return z;
  };

  LpSolution out;
  out.status = LpStatus::Optimal;
  out.iterations = iterations_;
  out.point = to_original(raw);
  out.max_violation = lp_.max_violation(out.point);
  std::vector<double> refined = raw;
  if (out.max_violation > 1e-3 * opt_.feasibility_tol && refine(refined)) {
    std::vector<double> z = to_original(refined);
    const double v = lp_.max_violation(z);
    if (v <= out.max_violation) {
      out.point = std::move(z);
      out.max_violation = v;
    }
  }
  if (out.max_violation > 1e3 * opt_.feasibility_tol) {
    throw Error(ErrorCode::NumericalFailure,
                "optimal basis violates constraints by " + std::to_string(out.max_violation));
  }
  out.objective_value = 0.0;
  for (std::size_t j = 0; j < n_; ++j) out.objective_value += lp_.objective()[j] * out.point[j];
  return out;
}

}  // namespace

LpSolution SimplexSolver::solve(const LinearProgram& lp) {
  lp.check();
  Tableau t(lp, options_, tableau_);
  return t.run();
}

struct IncrementalSimplex::State {
  State(const LinearProgram& lp, SimplexOptions o) : options(o), tableau(lp, options, storage) {}
  SimplexOptions options;
  std::vector<double> storage;
  Tableau tableau;
};

IncrementalSimplex::IncrementalSimplex(const LinearProgram& lp, SimplexOptions options)
    : lp_(lp), options_(options) {}

IncrementalSimplex::~IncrementalSimplex() = default;

LpSolution IncrementalSimplex::solve() {
  lp_.check();
  if (state_ && warm_) {
    LpSolution out = state_->tableau.resume();
    warm_ = out.status == LpStatus::Optimal;
    return out;
  }
  state_ = std::make_unique<State>(lp_, options_);
  LpSolution out = state_->tableau.run();
  warm_ = out.status == LpStatus::Optimal;
  return out;
}

LpSolution solve_lp(const LinearProgram& lp, SimplexOptions options) {
  SimplexSolver solver(options);
  return solver.solve(lp);
}

}  // namespace umri
