#include "mplan/fda.hpp"

#include <algorithm>
#include <cmath>

namespace mplan {

namespace {

using Dir = std::vector<ControlInput>;

double dot(const Dir& a, const Dir& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    s += a[i].j_x * b[i].j_x + a[i].a_y * b[i].a_y;
  }
  return s;
}

// Drops gradient components that push an already-bounded control further out
// of the box; what remains is the feasible first-order descent content.
Dir project_gradient(const Dir& g, const ControlTrajectory& u,
                     const ControlBounds& b) {
  Dir pg = g;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const ControlInput& c = u.steps[i];
    if ((c.j_x <= b.j_x_min && g[i].j_x > 0.0) ||
        (c.j_x >= b.j_x_max && g[i].j_x < 0.0)) {
      pg[i].j_x = 0.0;
    }
    if ((c.a_y <= b.a_y_min && g[i].a_y > 0.0) ||
        (c.a_y >= b.a_y_max && g[i].a_y < 0.0)) {
      pg[i].a_y = 0.0;
    }
  }
  return pg;
}

// Zeroes direction components that would leave the box from an active bound,
// so small steps stay feasible and the slope model stays exact.
void clip_outward(Dir& d, const ControlTrajectory& u, const ControlBounds& b) {
  for (std::size_t i = 0; i < d.size(); ++i) {
    const ControlInput& c = u.steps[i];
    if ((c.j_x <= b.j_x_min && d[i].j_x < 0.0) ||
        (c.j_x >= b.j_x_max && d[i].j_x > 0.0)) {
      d[i].j_x = 0.0;
    }
    if ((c.a_y <= b.a_y_min && d[i].a_y < 0.0) ||
        (c.a_y >= b.a_y_max && d[i].a_y > 0.0)) {
      d[i].a_y = 0.0;
    }
  }
}

ControlTrajectory advance(const ControlTrajectory& u, const Dir& d,
                          double alpha, const ControlBounds& b) {
  ControlTrajectory n = u;
  for (std::size_t i = 0; i < d.size(); ++i) {
    n.steps[i].j_x += alpha * d[i].j_x;
    n.steps[i].a_y += alpha * d[i].a_y;
  }
  return project_controls(std::move(n), b);
}

}  // namespace

ControlTrajectory project_controls(ControlTrajectory u,
                                   const ControlBounds& b) {
  for (ControlInput& c : u.steps) {
    c.j_x = std::clamp(c.j_x, b.j_x_min, b.j_x_max);
    c.a_y = std::clamp(c.a_y, b.a_y_min, b.a_y_max);
  }
  return u;
}

std::optional<double> line_search(const std::function<double(double)>& cost_at,
                                  double cost_0, double slope_0,
                                  const SolverConfig& cfg) {
  for (double alpha = 1.0; alpha >= cfg.min_step; alpha *= cfg.ls_shrink) {
    const double c = cost_at(alpha);
    // A NaN candidate fails the comparison and keeps shrinking.
    if (c <= cost_0 + cfg.ls_c1 * alpha * slope_0) return alpha;
  }
  return std::nullopt;
}

SolveResult solve(const VehicleState& s0, const ControlTrajectory& u0,
                  const ControlBounds& bounds, const PlanningContext& ctx,
                  const SolverConfig& cfg) {
  SolveResult res;
  res.controls = project_controls(u0, bounds);
  res.states = rollout(s0, res.controls);
  res.cost = evaluate_cost(res.states, res.controls, ctx);
  double J = res.cost.total();
  if (!std::isfinite(J)) {
    res.status = SolveStatus::NonFiniteCost;
    return res;
  }
  res.cost_history.push_back(J);

  Dir grad = cost_gradient(res.states, res.controls, ctx);
  Dir pg = project_gradient(grad, res.controls, bounds);
  Dir pg_prev;
  Dir dir;
  res.grad_norm = std::sqrt(dot(pg, pg));
  res.status = SolveStatus::IterationLimit;

  for (int it = 1; it <= cfg.max_iterations; ++it) {
    if (res.grad_norm <= cfg.grad_tol) {
      res.status = SolveStatus::Converged;
      break;
    }

    // Conjugate direction with a non-negative momentum factor; restart on
    // schedule or whenever the combination stops being a descent direction.
    bool restart = dir.empty() || ((it - 1) % cfg.cg_restart == 0);
    if (!restart) {
      const double denom = dot(pg_prev, pg_prev);
      double beta = 0.0;
      if (denom > 0.0) {
        Dir diff = pg;
        for (std::size_t i = 0; i < diff.size(); ++i) {
          diff[i].j_x -= pg_prev[i].j_x;
          diff[i].a_y -= pg_prev[i].a_y;
        }
        beta = std::max(0.0, dot(pg, diff) / denom);
      }
      for (std::size_t i = 0; i < dir.size(); ++i) {
        dir[i].j_x = -pg[i].j_x + beta * dir[i].j_x;
        dir[i].a_y = -pg[i].a_y + beta * dir[i].a_y;
      }
      clip_outward(dir, res.controls, bounds);
      if (dot(grad, dir) >= 0.0) restart = true;
    }
    if (restart) {
      dir.assign(pg.size(), ControlInput{});
      for (std::size_t i = 0; i < pg.size(); ++i) {
        dir[i].j_x = -pg[i].j_x;
        dir[i].a_y = -pg[i].a_y;
      }
    }

    const double slope = dot(grad, dir);
    const auto cost_at = [&](double alpha) {
      const ControlTrajectory cand = advance(res.controls, dir, alpha, bounds);
      return total_cost(s0, cand, ctx).total();
    };
    const std::optional<double> alpha = line_search(cost_at, J, slope, cfg);
    if (!alpha) {
      res.status = SolveStatus::Stalled;
      break;
    }

    // Refine the accepted step with one safeguarded quadratic fit. Near the
    // minimum the backtracking step alone is too coarse for the conjugate
    // directions to stay conjugate, which shows up as a long gradient tail.
    double step = *alpha;
    double step_cost = cost_at(step);
    const double fit_denom = 2.0 * (step_cost - J - slope * step);
    if (fit_denom > 0.0) {
      const double refined = std::clamp(-slope * step * step / fit_denom,
                                        0.1 * step, 10.0 * step);
      const double refined_cost = cost_at(refined);
      if (refined_cost < step_cost) {
        step = refined;
        step_cost = refined_cost;
      }
    }

    res.iterations = it;
    res.controls = advance(res.controls, dir, step, bounds);
    res.states = rollout(s0, res.controls);
    res.cost = evaluate_cost(res.states, res.controls, ctx);
    J = res.cost.total();
    res.cost_history.push_back(J);

    grad = cost_gradient(res.states, res.controls, ctx);
    pg_prev = std::move(pg);
    pg = project_gradient(grad, res.controls, bounds);
    res.grad_norm = std::sqrt(dot(pg, pg));
    if (res.grad_norm <= cfg.grad_tol) {
      res.status = SolveStatus::Converged;
      break;
    }
  }
  return res;
}

}  // namespace mplan
