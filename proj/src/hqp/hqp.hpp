#pragma once
#include <utility>
#include <vector>

#include "core/mat.hpp"

namespace wm::hqp {

using Vecd = std::vector<double>;

enum class TaskKind {
    Equality,  // least-squares objective w * ||A x - b||^2
    Inequality // constraint A x <= b, violation slacked and minimized
};

struct LinearTask {
    Matd A;
    Vecd b;
    TaskKind kind = TaskKind::Equality;
    double weight = 1.0; // objectives only; inequality slack always weight 1
};

// Strict priority levels. Box bounds are hard at every level. Level p
// minimizes its own slack norm subject to the box and to every higher
// level's optimum: equality tasks freeze their residual vector exactly,
// inequality tasks freeze A x <= b + s* (more satisfaction stays allowed).
struct HqpProblem {
    Vecd lo, hi;
    std::vector<std::vector<LinearTask>> levels;
};

struct HqpResult {
    Vecd x;
    // objective value attained per level: sum of w||Ax-b||^2 over equality
    // tasks plus ||max(0, Ax-b)||^2 over inequality tasks of that level
    Vecd level_objective;
    int iterations = 0; // active-set iterations across all levels
    bool converged = true;
};

// Constraints inherited from higher levels, stacked row-wise.
struct Frozen {
    Matd Aeq; // A x = beq
    Vecd beq;
    Matd Ain; // A x <= bin
    Vecd bin;
};

struct LevelSolution {
    Vecd x;
    double objective = 0.0;
    int iterations = 0;
    bool converged = true;
};

// Solves one level with the box hard, frozen rows hard, this level's
// inequality rows slacked. x_start must satisfy box and frozen rows.
LevelSolution solve_level(const std::vector<LinearTask>& tasks, const Frozen& frozen, const Vecd& lo,
                          const Vecd& hi, const Vecd& x_start);

HqpResult solve_hierarchy(const HqpProblem& problem);

// Objective of one level at x (same formula the solver minimizes, without
// the Tikhonov term); shared with tests and the hierarchy driver.
double level_objective(const std::vector<LinearTask>& level, const Vecd& x);

// Velocity bound that shrinks linearly to zero as q approaches a position
// limit within `margin`, and goes negative past the limit so the solver
// pushes back toward the feasible range. Returns {vlo, vhi}.
std::pair<double, double> velocity_damper(double q, double lo, double hi, double vmax,
                                          double margin = 0.1, double gain = 1.0);

} // namespace wm::hqp
