#pragma once
#include <cassert>
#include <cstddef>
#include <vector>

#include "core/parallel.hpp"

namespace wm {

// Dense row-major matrix. Deliberately minimal: the kernels below are the
// only operations the networks need, and every output element is produced by
// a reduction whose order is fixed by the code, so the OpenMP variants are
// bitwise equal to the serial references regardless of worker count.
template <typename T>
struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<T> a;

    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), a(static_cast<size_t>(r) * c, T(0)) {}

    T* row(int i) { return a.data() + static_cast<size_t>(i) * cols; }
    const T* row(int i) const { return a.data() + static_cast<size_t>(i) * cols; }
    T& at(int i, int j) { return a[static_cast<size_t>(i) * cols + j]; }
    T at(int i, int j) const { return a[static_cast<size_t>(i) * cols + j]; }
    void fill(T v) { a.assign(a.size(), v); }
};

using Matd = Mat<double>;
using Matf = Mat<float>;

// Dot product over 8 independent accumulator lanes combined in a fixed tree.
// Lane l sums elements p with p/8 fixed order, so the value is identical
// whether the compiler emits SIMD or scalar code, yet the reduction is not
// one long latency chain.
template <typename T>
inline T dot8(const T* x, const T* y, int k) {
    T s0 = 0, s1 = 0, s2 = 0, s3 = 0, s4 = 0, s5 = 0, s6 = 0, s7 = 0;
    int p = 0;
    for (; p + 8 <= k; p += 8) {
        s0 += x[p + 0] * y[p + 0];
        s1 += x[p + 1] * y[p + 1];
        s2 += x[p + 2] * y[p + 2];
        s3 += x[p + 3] * y[p + 3];
        s4 += x[p + 4] * y[p + 4];
        s5 += x[p + 5] * y[p + 5];
        s6 += x[p + 6] * y[p + 6];
        s7 += x[p + 7] * y[p + 7];
    }
    T tail = 0;
    for (; p < k; ++p) tail += x[p] * y[p];
    return (((s0 + s1) + (s2 + s3)) + ((s4 + s5) + (s6 + s7))) + tail;
}

// C = A * B^T, A (m x k), B (n x k) -> C (m x n). Both operands are walked
// contiguously; this is the forward kernel (X * W^T).
template <typename T>
void matmul_nt_serial(const Mat<T>& A, const Mat<T>& B, Mat<T>& C) {
    assert(A.cols == B.cols);
    C = Mat<T>(A.rows, B.rows);
    for (int i = 0; i < A.rows; ++i) {
        const T* ai = A.row(i);
        T* ci = C.row(i);
        for (int j = 0; j < B.rows; ++j) ci[j] = dot8(ai, B.row(j), A.cols);
    }
}

template <typename T>
void matmul_nt(const Mat<T>& A, const Mat<T>& B, Mat<T>& C) {
    assert(A.cols == B.cols);
    C = Mat<T>(A.rows, B.rows);
    const int nw = worker_count();
#pragma omp parallel for schedule(static) num_threads(nw) if (nw > 1 && A.rows > 1)
    for (int i = 0; i < A.rows; ++i) {
        const T* ai = A.row(i);
        T* ci = C.row(i);
        for (int j = 0; j < B.rows; ++j) ci[j] = dot8(ai, B.row(j), A.cols);
    }
}

// C = A * B, A (m x k), B (k x n) -> C (m x n). Backward kernel dX = dZ * W.
// The inner j loop writes distinct elements, so vectorizing it cannot change
// the per-element accumulation order (ascending p).
template <typename T>
void matmul_nn_serial(const Mat<T>& A, const Mat<T>& B, Mat<T>& C) {
    assert(A.cols == B.rows);
    C = Mat<T>(A.rows, B.cols);
    for (int i = 0; i < A.rows; ++i) {
        const T* ai = A.row(i);
        T* ci = C.row(i);
        for (int p = 0; p < A.cols; ++p) {
            const T aip = ai[p];
            const T* bp = B.row(p);
            for (int j = 0; j < B.cols; ++j) ci[j] += aip * bp[j];
        }
    }
}

template <typename T>
void matmul_nn(const Mat<T>& A, const Mat<T>& B, Mat<T>& C) {
    assert(A.cols == B.rows);
    C = Mat<T>(A.rows, B.cols);
    const int nw = worker_count();
#pragma omp parallel for schedule(static) num_threads(nw) if (nw > 1 && A.rows > 1)
    for (int i = 0; i < A.rows; ++i) {
        const T* ai = A.row(i);
        T* ci = C.row(i);
        for (int p = 0; p < A.cols; ++p) {
            const T aip = ai[p];
            const T* bp = B.row(p);
            for (int j = 0; j < B.cols; ++j) ci[j] += aip * bp[j];
        }
    }
}

// C = A^T * B, A (k x m), B (k x n) -> C (m x n). Weight-gradient kernel
// dW = dZ^T * H; the reduction over k runs in ascending order per element.
template <typename T>
void matmul_tn_serial(const Mat<T>& A, const Mat<T>& B, Mat<T>& C) {
    assert(A.rows == B.rows);
    C = Mat<T>(A.cols, B.cols);
    for (int i = 0; i < A.cols; ++i) {
        T* ci = C.row(i);
        for (int p = 0; p < A.rows; ++p) {
            const T api = A.at(p, i);
            const T* bp = B.row(p);
            for (int j = 0; j < B.cols; ++j) ci[j] += api * bp[j];
        }
    }
}

template <typename T>
void matmul_tn(const Mat<T>& A, const Mat<T>& B, Mat<T>& C) {
    assert(A.rows == B.rows);
    C = Mat<T>(A.cols, B.cols);
    const int nw = worker_count();
#pragma omp parallel for schedule(static) num_threads(nw) if (nw > 1 && A.cols > 1)
    for (int i = 0; i < A.cols; ++i) {
        T* ci = C.row(i);
        for (int p = 0; p < A.rows; ++p) {
            const T api = A.at(p, i);
            const T* bp = B.row(p);
            for (int j = 0; j < B.cols; ++j) ci[j] += api * bp[j];
        }
    }
}

} // namespace wm
