#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "mplan/cost.hpp"
#include "mplan/kinematics.hpp"

namespace mplan {

struct SolverConfig {
  int max_iterations = 50;
  double grad_tol = 1e-3;   // on the projected-gradient 2-norm
  double ls_shrink = 0.5;   // backtracking factor
  double ls_c1 = 1e-4;      // sufficient-decrease constant
  int cg_restart = 10;      // steepest-descent restart period
  double min_step = 1e-12;  // below this the search is declared stalled
};

enum class SolveStatus {
  Converged,       // projected-gradient norm reached grad_tol
  IterationLimit,  // stopped at max_iterations
  Stalled,         // no acceptable step above min_step; kept the best iterate
  NonFiniteCost,   // the initial cost was not finite; result is unusable
};

struct SolveResult {
  ControlTrajectory controls;
  std::vector<VehicleState> states;
  CostBreakdown cost;
  std::vector<double> cost_history;  // initial cost plus one entry per accepted step
  double grad_norm = 0.0;            // projected-gradient 2-norm at exit
  int iterations = 0;
  SolveStatus status = SolveStatus::IterationLimit;

  bool usable() const { return status != SolveStatus::NonFiniteCost; }
};

// Clamps every control step into the bounds box. Idempotent.
ControlTrajectory project_controls(ControlTrajectory u, const ControlBounds& b);

// Backtracking step search: tries alpha = 1 and shrinks until the candidate
// cost satisfies cost_0 + c1 * alpha * slope_0 (slope_0 = directional
// derivative, negative for a descent direction). cost_at must evaluate the
// candidate at the given step length. Returns the accepted step, or nullopt
// once alpha falls below min_step.
std::optional<double> line_search(const std::function<double(double)>& cost_at,
                                  double cost_0, double slope_0,
                                  const SolverConfig& cfg);

// Minimizes the planning objective over bounded controls with a projected
// conjugate-gradient descent: momentum in the interior, components frozen
// against active bounds, periodic steepest-descent restarts, and a
// backtracking step search with quadratic refinement and re-projection. The
// cost history is non-increasing; identical inputs give bitwise-identical
// results.
SolveResult solve(const VehicleState& s0, const ControlTrajectory& u0,
                  const ControlBounds& bounds, const PlanningContext& ctx,
                  const SolverConfig& cfg);

}  // namespace mplan
