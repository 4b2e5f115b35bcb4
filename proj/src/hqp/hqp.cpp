#include "hqp/hqp.hpp"

#include <algorithm>
#include <cmath>

#include "core/linsolve.hpp"

namespace wm::hqp {

namespace {

constexpr double kTikhonov = 1e-8;
constexpr double kTol = 1e-9;
constexpr int kMaxIter = 100;
constexpr double kHuge = 1e29;

void append_row(Matd& A, Vecd& b, const double* row, int n, double rhs) {
    Matd next(A.rows + 1, n);
    std::copy(A.a.begin(), A.a.end(), next.a.begin());
    std::copy(row, row + n, next.row(A.rows));
    A = std::move(next);
    b.push_back(rhs);
}

// Keeps a maximal linearly independent subset of rows (Gaussian elimination
// with partial pivoting on a scratch copy). Dropped rows are consistent by
// construction here: every caller passes systems satisfied by a known point.
void compress_rows(Matd& A, Vecd& b) {
    if (A.rows == 0) return;
    Matd S = A;
    std::vector<int> keep;
    int rank_col = 0;
    std::vector<int> rows(S.rows);
    for (int i = 0; i < S.rows; ++i) rows[i] = i;
    int r = 0;
    while (r < S.rows && rank_col < S.cols) {
        int best = -1;
        double bestv = 1e-10;
        for (int i = r; i < S.rows; ++i) {
            double v = std::abs(S.at(i, rank_col));
            if (v > bestv) {
                bestv = v;
                best = i;
            }
        }
        if (best < 0) {
            ++rank_col;
            continue;
        }
        if (best != r) {
            for (int j = 0; j < S.cols; ++j) std::swap(S.at(r, j), S.at(best, j));
            std::swap(rows[r], rows[best]);
        }
        keep.push_back(rows[r]);
        for (int i = r + 1; i < S.rows; ++i) {
            double f = S.at(i, rank_col) / S.at(r, rank_col);
            if (f == 0.0) continue;
            for (int j = rank_col; j < S.cols; ++j) S.at(i, j) -= f * S.at(r, j);
        }
        ++r;
        ++rank_col;
    }
    std::sort(keep.begin(), keep.end());
    Matd A2(static_cast<int>(keep.size()), A.cols);
    Vecd b2;
    for (size_t i = 0; i < keep.size(); ++i) {
        std::copy(A.row(keep[i]), A.row(keep[i]) + A.cols, A2.row(static_cast<int>(i)));
        b2.push_back(b[keep[i]]);
    }
    A = std::move(A2);
    b = std::move(b2);
}

struct Qp {
    int n = 0;
    Matd H;
    Vecd g;
    Matd E; // hard equalities E z = e
    Vecd e;
    Matd A; // inequalities A z <= b
    Vecd b;
};

double dot_row(const Matd& M, int r, const Vecd& z) {
    const double* row = M.row(r);
    double s = 0;
    for (int j = 0; j < M.cols; ++j) s += row[j] * z[j];
    return s;
}

// Primal active-set method for a strictly convex QP. z0 must be feasible.
// Each subproblem (equalities + working set tight) is solved through its
// KKT system; a singular KKT means the newest working row is dependent and
// gets dropped.
Vecd qp_active_set(const Qp& qp, Vecd z, int* iters_out, bool* converged) {
    const int n = qp.n;
    std::vector<int> work; // indices into qp.A
    *converged = false;
    int it = 0;
    for (; it < kMaxIter; ++it) {
        const int ke = qp.E.rows;
        const int kw = static_cast<int>(work.size());
        const int k = ke + kw;
        Matd K(n + k, n + k);
        Vecd rhs(n + k, 0.0);
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) K.at(i, j) = qp.H.at(i, j);
            rhs[i] = -qp.g[i];
        }
        for (int c = 0; c < k; ++c) {
            const Matd& src = c < ke ? qp.E : qp.A;
            const int row = c < ke ? c : work[c - ke];
            const double rhsv = c < ke ? qp.e[c] : qp.b[work[c - ke]];
            for (int j = 0; j < n; ++j) {
                K.at(n + c, j) = src.at(row, j);
                K.at(j, n + c) = src.at(row, j);
            }
            rhs[n + c] = rhsv;
        }
        Vecd sol;
        if (!lu_solve(K, rhs, sol)) {
            if (!work.empty()) {
                work.pop_back(); // dependent working row
                continue;
            }
            break; // degenerate equalities; caller pre-compresses, so give up
        }
        Vecd p(n);
        double pmax = 0;
        for (int i = 0; i < n; ++i) {
            p[i] = sol[i] - z[i];
            pmax = std::max(pmax, std::abs(p[i]));
        }
        if (pmax <= kTol) {
            // at the subproblem optimum; check working multipliers
            int drop = -1;
            double most_neg = -kTol;
            for (int c = 0; c < kw; ++c) {
                double mu = sol[n + ke + c];
                if (mu < most_neg) {
                    most_neg = mu;
                    drop = c;
                }
            }
            if (drop < 0) {
                *converged = true;
                break;
            }
            work.erase(work.begin() + drop);
            continue;
        }
        // longest feasible step along p
        double alpha = 1.0;
        int blocker = -1;
        for (int j = 0; j < qp.A.rows; ++j) {
            if (std::find(work.begin(), work.end(), j) != work.end()) continue;
            double den = dot_row(qp.A, j, p);
            if (den <= kTol) continue;
            double aj = (qp.b[j] - dot_row(qp.A, j, z)) / den;
            if (aj < alpha) {
                alpha = aj;
                blocker = j;
            }
        }
        alpha = std::max(alpha, 0.0);
        for (int i = 0; i < n; ++i) z[i] += alpha * p[i];
        if (blocker >= 0)
            work.push_back(blocker);
        else if (alpha == 1.0) {
            // full step taken; loop once more to verify optimality
        }
    }
    if (iters_out) *iters_out += it;
    return z;
}

} // namespace

double level_objective(const std::vector<LinearTask>& level, const Vecd& x) {
    double obj = 0;
    for (const auto& t : level) {
        for (int r = 0; r < t.A.rows; ++r) {
            double resid = dot_row(t.A, r, x) - t.b[r];
            if (t.kind == TaskKind::Equality)
                obj += t.weight * resid * resid;
            else if (resid > 0)
                obj += resid * resid;
        }
    }
    return obj;
}

LevelSolution solve_level(const std::vector<LinearTask>& tasks, const Frozen& frozen, const Vecd& lo,
                          const Vecd& hi, const Vecd& x_start) {
    const int n = static_cast<int>(lo.size());
    int ns = 0;
    for (const auto& t : tasks)
        if (t.kind == TaskKind::Inequality) ns += t.A.rows;
    const int nz = n + ns;

    Qp qp;
    qp.n = nz;
    qp.H = Matd(nz, nz);
    qp.g.assign(nz, 0.0);
    for (int i = 0; i < n; ++i) qp.H.at(i, i) = 2.0 * kTikhonov;
    for (const auto& t : tasks) {
        if (t.kind != TaskKind::Equality || t.weight <= 0.0) continue;
        for (int r = 0; r < t.A.rows; ++r) {
            const double* row = t.A.row(r);
            for (int i = 0; i < n; ++i) {
                if (row[i] == 0.0) continue;
                for (int j = 0; j < n; ++j) qp.H.at(i, j) += 2.0 * t.weight * row[i] * row[j];
                qp.g[i] -= 2.0 * t.weight * row[i] * t.b[r];
            }
        }
    }
    for (int s = 0; s < ns; ++s) qp.H.at(n + s, n + s) = 2.0;

    // hard equalities from frozen rows, padded with zero slack columns
    qp.E = Matd(frozen.Aeq.rows, nz);
    for (int r = 0; r < frozen.Aeq.rows; ++r)
        std::copy(frozen.Aeq.row(r), frozen.Aeq.row(r) + n, qp.E.row(r));
    qp.e = frozen.beq;
    compress_rows(qp.E, qp.e);

    qp.A = Matd(0, nz);
    Vecd scratch(nz, 0.0);
    auto add_ineq = [&](const Vecd& row, double rhs) { append_row(qp.A, qp.b, row.data(), nz, rhs); };
    for (int i = 0; i < n; ++i) {
        if (hi[i] < kHuge) {
            std::fill(scratch.begin(), scratch.end(), 0.0);
            scratch[i] = 1.0;
            add_ineq(scratch, hi[i]);
        }
        if (lo[i] > -kHuge) {
            std::fill(scratch.begin(), scratch.end(), 0.0);
            scratch[i] = -1.0;
            add_ineq(scratch, -lo[i]);
        }
    }
    for (int r = 0; r < frozen.Ain.rows; ++r) {
        std::fill(scratch.begin(), scratch.end(), 0.0);
        std::copy(frozen.Ain.row(r), frozen.Ain.row(r) + n, scratch.begin());
        add_ineq(scratch, frozen.bin[r]);
    }
    // this level's inequality rows: A x - s <= b with s >= 0
    int s_idx = 0;
    Vecd z0(nz, 0.0);
    std::copy(x_start.begin(), x_start.end(), z0.begin());
    for (const auto& t : tasks) {
        if (t.kind != TaskKind::Inequality) continue;
        for (int r = 0; r < t.A.rows; ++r) {
            std::fill(scratch.begin(), scratch.end(), 0.0);
            std::copy(t.A.row(r), t.A.row(r) + n, scratch.begin());
            scratch[n + s_idx] = -1.0;
            add_ineq(scratch, t.b[r]);
            std::fill(scratch.begin(), scratch.end(), 0.0);
            scratch[n + s_idx] = -1.0;
            add_ineq(scratch, 0.0);
            double viol = dot_row(t.A, r, x_start) - t.b[r];
            z0[n + s_idx] = std::max(0.0, viol);
            ++s_idx;
        }
    }

    LevelSolution out;
    out.iterations = 0;
    bool conv = false;
    Vecd z = qp_active_set(qp, z0, &out.iterations, &conv);
    out.converged = conv;
    out.x.assign(z.begin(), z.begin() + n);
    out.objective = level_objective(tasks, out.x);
    return out;
}

HqpResult solve_hierarchy(const HqpProblem& problem) {
    const int n = static_cast<int>(problem.lo.size());
    HqpResult res;
    res.x.assign(n, 0.0);
    for (int i = 0; i < n; ++i) res.x[i] = std::clamp(0.0, problem.lo[i], problem.hi[i]);
    Frozen frozen;
    frozen.Aeq = Matd(0, n);
    frozen.Ain = Matd(0, n);
    for (const auto& level : problem.levels) {
        LevelSolution sol = solve_level(level, frozen, problem.lo, problem.hi, res.x);
        res.x = sol.x;
        res.iterations += sol.iterations;
        res.converged = res.converged && sol.converged;
        res.level_objective.push_back(sol.objective);
        for (const auto& t : level) {
            if (t.kind == TaskKind::Equality) {
                // zero-weight objectives were not optimized; freezing them
                // would constrain lower levels with an arbitrary value
                if (t.weight <= 0.0) continue;
                for (int r = 0; r < t.A.rows; ++r)
                    append_row(frozen.Aeq, frozen.beq, t.A.row(r), n, dot_row(t.A, r, res.x));
            } else {
                for (int r = 0; r < t.A.rows; ++r) {
                    double slack = std::max(0.0, dot_row(t.A, r, res.x) - t.b[r]);
                    append_row(frozen.Ain, frozen.bin, t.A.row(r), n, t.b[r] + slack);
                }
            }
        }
    }
    return res;
}

std::pair<double, double> velocity_damper(double q, double lo, double hi, double vmax, double margin,
                                          double gain) {
    double up = std::clamp(gain * (hi - q) / margin, -1.0, 1.0) * vmax;
    double dn = -std::clamp(gain * (q - lo) / margin, -1.0, 1.0) * vmax;
    return {dn, up};
}

} // namespace wm::hqp
