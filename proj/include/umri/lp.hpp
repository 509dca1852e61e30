#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "umri/kernels.hpp"

namespace umri {

/// maximize c'z  subject to  A z <= b,  lower <= z <= upper.
///
/// Constraints are stored sparsely; bounds must be finite.
class LinearProgram {
 public:
  struct Term {
    std::size_t var;
    double coef;
  };
  struct Constraint {
    std::vector<Term> terms;
    double rhs = 0.0;
  };

  std::size_t add_variable(double lower, double upper, double objective = 0.0,
                           std::string name = {});
  void add_constraint(std::vector<Term> terms, double rhs);
  void set_objective(std::size_t var, double coef);

  std::size_t num_variables() const { return lower_.size(); }
  std::size_t num_constraints() const { return constraints_.size(); }

  const std::vector<double>& objective() const { return objective_; }
  const std::vector<Constraint>& constraints() const { return constraints_; }
  const std::vector<double>& lower() const { return lower_; }
  const std::vector<double>& upper() const { return upper_; }
  const std::vector<std::string>& var_names() const { return names_; }

  /// Largest violation of any constraint or bound at `point`.
  double max_violation(const std::vector<double>& point) const;

  /// Throws Error{InvalidArgument} on non-finite data or crossed bounds.
  void check() const;

 private:
  std::vector<double> objective_;
  std::vector<double> lower_;
  std::vector<double> upper_;
  std::vector<std::string> names_;
  std::vector<Constraint> constraints_;
};

enum class LpStatus { Optimal, Infeasible, Unbounded };

struct LpSolution {
  LpStatus status = LpStatus::Infeasible;
  std::vector<double> point;     ///< empty unless Optimal
  double objective_value = 0.0;  ///< meaningful only if Optimal
  double max_violation = 0.0;
  std::size_t iterations = 0;
};

struct SimplexOptions {
  double feasibility_tol = 1e-9;
  /// Reduced-cost threshold, relative to the largest objective coefficient.
  double optimality_tol = 1e-9;
  double pivot_tol = 1e-7;
  /// Consecutive degenerate pivots tolerated before the anti-degeneracy
  /// measures described below kick in.
  std::size_t degenerate_streak = 50;
  std::size_t max_iterations = 0;  ///< 0 picks 50 * (rows + columns)
  kernels::Execution execution = kernels::Execution::Parallel;
};

/// Dense-tableau primal simplex for box-bounded variables.
///
/// Pricing is Dantzig's largest reduced cost with ties broken by lowest column
/// index. The first streak of degenerate pivots triggers a small fixed-seed
/// shift of the right-hand side; it is removed at optimality and dual simplex
/// restores exact feasibility. A second streak switches to random entering
/// columns until the objective moves again. The leaving row comes from Harris's
/// two-pass ratio test. Basic values are checked against the original rows
/// every 100 pivots and before optimality is declared; the tableau is rebuilt
/// from an LU factorization of the basis when a check fails and every 1000
/// pivots. Runs are deterministic.
///
/// Each instance owns its working memory; use one solver per thread.
class SimplexSolver {
 public:
  explicit SimplexSolver(SimplexOptions options = {}) : options_(options) {}

  /// Throws Error{NumericalFailure} when the iteration limit is hit or the
  /// refined point violates the constraints beyond tolerance.
  LpSolution solve(const LinearProgram& lp);

 private:
  SimplexOptions options_;
  std::vector<double> tableau_;
};

/// Re-solves a program that grows by constraints between calls. After an
/// optimal solve, appended rows enter with their slacks basic, dual simplex
/// restores feasibility, and primal simplex finishes; otherwise the program
/// is solved from scratch. Variables and the objective must not change.
class IncrementalSimplex {
 public:
  explicit IncrementalSimplex(const LinearProgram& lp, SimplexOptions options = {});
  ~IncrementalSimplex();
  IncrementalSimplex(const IncrementalSimplex&) = delete;
  IncrementalSimplex& operator=(const IncrementalSimplex&) = delete;

  /// Iterations in the result count this call only.
  LpSolution solve();

 private:
  struct State;
  const LinearProgram& lp_;
  SimplexOptions options_;
  std::unique_ptr<State> state_;
  bool warm_ = false;
};

LpSolution solve_lp(const LinearProgram& lp, SimplexOptions options = {});

}  // namespace umri
