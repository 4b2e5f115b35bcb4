#pragma once
#include <cmath>
#include <vector>

#include "core/mat.hpp"

namespace wm {

// Dense LU with partial pivoting, in place. Returns false when a pivot
// falls below the threshold (treat the system as singular). Sized for the
// small KKT systems this project solves; not a general-purpose library.
inline bool lu_solve(Matd A, std::vector<double> b, std::vector<double>& x, double pivot_tol = 1e-12) {
    const int n = A.rows;
    if (n != A.cols || static_cast<int>(b.size()) != n) return false;
    std::vector<int> piv(n);
    for (int i = 0; i < n; ++i) piv[i] = i;
    for (int k = 0; k < n; ++k) {
        int best = k;
        double bestv = std::abs(A.at(k, k));
        for (int i = k + 1; i < n; ++i) {
            double v = std::abs(A.at(i, k));
            if (v > bestv) {
                bestv = v;
                best = i;
            }
        }
        if (bestv < pivot_tol) return false;
        if (best != k) {
            for (int j = 0; j < n; ++j) std::swap(A.at(k, j), A.at(best, j));
            std::swap(b[k], b[best]);
        }
        const double inv = 1.0 / A.at(k, k);
        for (int i = k + 1; i < n; ++i) {
            double f = A.at(i, k) * inv;
            if (f == 0.0) continue;
            A.at(i, k) = f;
            for (int j = k + 1; j < n; ++j) A.at(i, j) -= f * A.at(k, j);
            b[i] -= f * b[k];
        }
    }
    x.assign(n, 0.0);
    for (int i = n - 1; i >= 0; --i) {
        double s = b[i];
        for (int j = i + 1; j < n; ++j) s -= A.at(i, j) * x[j];
        x[i] = s / A.at(i, i);
    }
    return true;
}

} // namespace wm
