#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "core/rng.hpp"
#include "hqp/hqp.hpp"
#include "support/hqp_oracle.hpp"

using namespace wm;
using namespace wm::hqp;
using wmtest::oracle_grid_polish;
using wmtest::oracle_hierarchy_objectives;
using wmtest::oracle_objective;

namespace {

LinearTask eq_task(Matd A, std::vector<double> b, double w = 1.0) {
    LinearTask t;
    t.A = std::move(A);
    t.b = std::move(b);
    t.kind = TaskKind::Equality;
    t.weight = w;
    return t;
}

LinearTask ineq_task(Matd A, std::vector<double> b) {
    LinearTask t;
    t.A = std::move(A);
    t.b = std::move(b);
    t.kind = TaskKind::Inequality;
    return t;
}

Matd identity(int n) {
    Matd I(n, n);
    for (int i = 0; i < n; ++i) I.at(i, i) = 1.0;
    return I;
}

} // namespace

TEST_CASE("single feasible task is solved exactly") {
    HqpProblem p;
    p.lo = {-10, -10};
    p.hi = {10, 10};
    p.levels.push_back({eq_task(identity(2), {3, 4})});
    auto res = solve_hierarchy(p);
    CHECK(res.converged);
    CHECK(std::abs(res.x[0] - 3.0) < 1e-6);
    CHECK(std::abs(res.x[1] - 4.0) < 1e-6);
    CHECK(res.level_objective[0] < 1e-10);
}

TEST_CASE("conflicting equal-weight tasks average") {
    HqpProblem p;
    p.lo = {-10};
    p.hi = {10};
    Matd one(1, 1);
    one.at(0, 0) = 1.0;
    p.levels.push_back({eq_task(one, {0.0}), eq_task(one, {1.0})});
    auto res = solve_hierarchy(p);
    CHECK(std::abs(res.x[0] - 0.5) < 1e-6);
}

TEST_CASE("lower level resolves ties toward its own target") {
    HqpProblem p;
    p.lo = {-10, -10};
    p.hi = {10, 10};
    Matd row(1, 2);
    row.at(0, 0) = 1.0;
    row.at(0, 1) = 1.0;
    p.levels.push_back({eq_task(row, {1.0})});
    p.levels.push_back({eq_task(identity(2), {0.0, 0.0})});
    auto res = solve_hierarchy(p);
    CHECK(std::abs(res.x[0] - 0.5) < 1e-6);
    CHECK(std::abs(res.x[1] - 0.5) < 1e-6);
    // level 1 must stay exactly satisfied
    CHECK(std::abs(res.x[0] + res.x[1] - 1.0) < 1e-8);
}

TEST_CASE("inequality constraints bind only when needed") {
    // objective pulls to 2, constraint caps at 1
    HqpProblem p;
    p.lo = {-10};
    p.hi = {10};
    Matd one(1, 1);
    one.at(0, 0) = 1.0;
    p.levels.push_back({ineq_task(one, {1.0})});
    p.levels.push_back({eq_task(one, {2.0})});
    auto res = solve_hierarchy(p);
    CHECK(std::abs(res.x[0] - 1.0) < 1e-6);
    CHECK(res.level_objective[0] < 1e-12);

    // satisfied side: objective pulls to 0.5, cap at 1 stays slack
    HqpProblem q = p;
    q.levels[1] = {eq_task(one, {0.5})};
    res = solve_hierarchy(q);
    CHECK(std::abs(res.x[0] - 0.5) < 1e-6);
}

TEST_CASE("infeasible inequality yields minimal slack, frozen downward") {
    // box forces x >= -1 but constraint wants x <= -2: slack 1 at level 0
    HqpProblem p;
    p.lo = {-1};
    p.hi = {10};
    Matd one(1, 1);
    one.at(0, 0) = 1.0;
    p.levels.push_back({ineq_task(one, {-2.0})});
    p.levels.push_back({eq_task(one, {5.0})});
    auto res = solve_hierarchy(p);
    CHECK(std::abs(res.x[0] - (-1.0)) < 1e-6);
    CHECK(std::abs(res.level_objective[0] - 1.0) < 1e-6);
}

TEST_CASE("velocity damper shrinks and pushes back") {
    auto [lo1, hi1] = velocity_damper(2.55, -2.6, 2.6, 1.5, 0.1, 1.0);
    CHECK(std::abs(hi1 - 0.75) < 1e-12); // half the nominal limit
    CHECK(std::abs(lo1 + 1.5) < 1e-12);

    auto [lo2, hi2] = velocity_damper(2.7, -2.6, 2.6, 1.5, 0.1, 1.0);
    CHECK(hi2 < 0.0); // past the limit: must move back
    CHECK(lo2 == -1.5);

    auto [lo3, hi3] = velocity_damper(0.0, -2.6, 2.6, 1.5, 0.1, 1.0);
    CHECK(hi3 == 1.5);
    CHECK(lo3 == -1.5);
}

TEST_CASE("solve_level matches grid+polish oracle on random box problems") {
    Rng rng(2024);
    for (int trial = 0; trial < 50; ++trial) {
        int n = 2 + rng.uniform_int(3);
        std::vector<double> lo(n), hi(n);
        for (int i = 0; i < n; ++i) {
            lo[i] = rng.uniform(-1.5, -0.2);
            hi[i] = rng.uniform(0.2, 1.5);
        }
        std::vector<LinearTask> tasks;
        int nt = 1 + rng.uniform_int(3);
        for (int t = 0; t < nt; ++t) {
            Matd A(1 + rng.uniform_int(n), n);
            for (auto& v : A.a) v = rng.uniform(-1.0, 1.0);
            std::vector<double> b(A.rows);
            for (auto& v : b) v = rng.uniform(-1.5, 1.5);
            if (rng.uniform() < 0.3)
                tasks.push_back(ineq_task(std::move(A), std::move(b)));
            else
                tasks.push_back(eq_task(std::move(A), std::move(b), rng.uniform(0.3, 3.0)));
        }
        Frozen none;
        none.Aeq = Matd(0, n);
        none.Ain = Matd(0, n);
        std::vector<double> start(n, 0.0);
        auto sol = solve_level(tasks, none, lo, hi, start);
        auto xo = oracle_grid_polish(tasks, lo, hi);
        double fo = oracle_objective(tasks, xo);
        double fs = sol.objective;
        double rel = std::abs(std::sqrt(fs) - std::sqrt(fo)) / std::max({1.0, std::sqrt(fs), std::sqrt(fo)});
        CAPTURE(trial);
        CAPTURE(fs);
        CAPTURE(fo);
        CHECK(rel < 1e-6);
        // the solver must never be worse than the oracle beyond tolerance
        CHECK(fs <= fo + 1e-8 + 1e-6 * fo);
    }
}

TEST_CASE("hierarchy matches enumeration oracle on random problems") {
    Rng rng(77);
    int checked = 0;
    for (int trial = 0; trial < 20; ++trial) {
        auto p = wmtest::random_hqp_problem(rng, 3, 4);
        auto res = solve_hierarchy(p);
        auto oracle = oracle_hierarchy_objectives(p);
        REQUIRE(oracle.size() == p.levels.size());
        for (size_t l = 0; l < oracle.size(); ++l) {
            REQUIRE(std::isfinite(oracle[l]));
            double a = std::sqrt(res.level_objective[l]);
            double b = std::sqrt(oracle[l]);
            double rel = std::abs(a - b) / std::max({1.0, a, b});
            CAPTURE(trial);
            CAPTURE(l);
            CAPTURE(a);
            CAPTURE(b);
            CHECK(rel < 1e-5);
        }
        ++checked;
    }
    CHECK(checked == 20);
}

TEST_CASE("lower-priority perturbations leave higher levels untouched") {
    Rng rng(31337);
    for (int trial = 0; trial < 10; ++trial) {
        auto p = wmtest::random_hqp_problem(rng, 3, 4);
        if (p.levels.size() < 2) continue;
        auto base = solve_hierarchy(p);
        auto q = p;
        for (auto& t : q.levels.back())
            for (auto& v : t.b) v += rng.uniform(-0.5, 0.5);
        auto pert = solve_hierarchy(q);
        for (size_t l = 0; l + 1 < p.levels.size(); ++l) {
            double a = std::sqrt(base.level_objective[l]);
            double b = std::sqrt(pert.level_objective[l]);
            CAPTURE(trial);
            CAPTURE(l);
            CHECK(std::abs(a - b) < 1e-8);
        }
    }
}
