#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "dvgen/errors.hpp"
#include "dvgen/tape.hpp"

namespace dvgen {

template <class S>
using VecT = std::vector<S>;

/// Dense row-major matrix over double or ad::Var. Row-major so row spans are
/// contiguous and feed the fused dot nodes directly.
template <class S>
struct MatT {
    int rows = 0;
    int cols = 0;
    std::vector<S> a;

    MatT() = default;
    MatT(int r, int c) : rows(r), cols(c), a(static_cast<std::size_t>(r) * c, S(0.0)) {}
    MatT(int r, int c, std::vector<S> data) : rows(r), cols(c), a(std::move(data)) {
        if (a.size() != static_cast<std::size_t>(r) * c)
            throw DimensionMismatch("matrix data length != rows*cols");
    }

    S& operator()(int i, int j) { return a[static_cast<std::size_t>(i) * cols + j]; }
    const S& operator()(int i, int j) const { return a[static_cast<std::size_t>(i) * cols + j]; }

    std::span<S> row(int i) { return {a.data() + static_cast<std::size_t>(i) * cols, static_cast<std::size_t>(cols)}; }
    std::span<const S> row(int i) const {
        return {a.data() + static_cast<std::size_t>(i) * cols, static_cast<std::size_t>(cols)};
    }

    static MatT identity(int n) {
        MatT m(n, n);
        for (int i = 0; i < n; ++i) m(i, i) = S(1.0);
        return m;
    }
};

using Matrix = MatT<double>;
using Vector = std::vector<double>;

template <class S>
bool all_finite(std::span<const S> xs) {
    for (const S& x : xs)
        if (!std::isfinite(val(x))) return false;
    return true;
}

/// Plain Cholesky, no jitter: A = L·Lᵀ with L lower-triangular. Throws
/// NotPositiveDefinite on a non-positive pivot.
template <class S>
MatT<S> cholesky_lower(const MatT<S>& m) {
    if (m.rows != m.cols) throw DimensionMismatch("cholesky: matrix not square");
    const int n = m.rows;
    MatT<S> L(n, n);
    using std::sqrt;
    for (int i = 0; i < n; ++i) {
        auto li = L.row(i);
        for (int j = 0; j < i; ++j) {
            auto lj = L.row(j);
            S s = m(i, j) - dot(li.subspan(0, j), lj.subspan(0, static_cast<std::size_t>(j)));
            L(i, j) = s / L(j, j);
        }
        S d = m(i, i) - dot(li.subspan(0, i), li.subspan(0, static_cast<std::size_t>(i)));
        if (!(val(d) > 0.0) || !std::isfinite(val(d)))
            throw NotPositiveDefinite("cholesky: non-positive pivot at row " + std::to_string(i));
        L(i, i) = sqrt(d);
    }
    return L;
}

/// Cholesky with the jitter schedule 0 -> 1e-8 -> 1e-6 -> 1e-4 added to the
/// diagonal; jitter_used reports what was needed (0 on the clean path).
template <class S>
MatT<S> cholesky_jittered(const MatT<S>& m, double* jitter_used = nullptr) {
    static constexpr double kSchedule[] = {0.0, 1e-8, 1e-6, 1e-4};
    for (double jitter : kSchedule) {
        try {
            MatT<S> work = m;
            if (jitter > 0.0) {
                for (int i = 0; i < m.rows; ++i) work(i, i) = work(i, i) + S(jitter);
            }
            MatT<S> L = cholesky_lower(work);
            if (jitter_used) *jitter_used = jitter;
            return L;
        } catch (const NotPositiveDefinite&) {
            continue;
        }
    }
    throw NotPositiveDefinite("cholesky: jitter schedule exhausted");
}

/// Solves L·y = b (forward substitution).
template <class S>
VecT<S> solve_lower(const MatT<S>& L, std::span<const S> b) {
    const int n = L.rows;
    if (static_cast<int>(b.size()) != n) throw DimensionMismatch("solve_lower: rhs length");
    VecT<S> y(static_cast<std::size_t>(n), S(0.0));
    for (int i = 0; i < n; ++i) {
        S s = b[static_cast<std::size_t>(i)] -
              dot(L.row(i).subspan(0, i), std::span<const S>(y.data(), static_cast<std::size_t>(i)));
        y[static_cast<std::size_t>(i)] = s / L(i, i);
    }
    return y;
}

/// Solves Lᵀ·x = y (back substitution against the stored lower factor).
template <class S>
VecT<S> solve_lower_transpose(const MatT<S>& L, std::span<const S> y) {
    const int n = L.rows;
    if (static_cast<int>(y.size()) != n) throw DimensionMismatch("solve_lower_transpose: rhs length");
    VecT<S> x(static_cast<std::size_t>(n), S(0.0));
    VecT<S> col(static_cast<std::size_t>(n), S(0.0));
    for (int i = n - 1; i >= 0; --i) {
        const std::size_t tail = static_cast<std::size_t>(n - 1 - i);
        for (int k = i + 1; k < n; ++k) col[static_cast<std::size_t>(k - i - 1)] = L(k, i);
        S s = y[static_cast<std::size_t>(i)] -
              dot(std::span<const S>(col.data(), tail),
                  std::span<const S>(x.data() + i + 1, tail));
        x[static_cast<std::size_t>(i)] = s / L(i, i);
    }
    return x;
}

/// Solves (L·Lᵀ)·x = b given the Cholesky factor.
template <class S>
VecT<S> solve_cholesky(const MatT<S>& L, std::span<const S> b) {
    VecT<S> y = solve_lower(L, b);
    return solve_lower_transpose(L, std::span<const S>(y.data(), y.size()));
}

template <class S>
S log_det_from_cholesky(const MatT<S>& L) {
    using std::log;
    S s(0.0);
    for (int i = 0; i < L.rows; ++i) s += log(L(i, i));
    return S(2.0) * s;
}

template <class S>
VecT<S> mat_vec(const MatT<S>& m, std::span<const S> x) {
    if (static_cast<int>(x.size()) != m.cols) throw DimensionMismatch("mat_vec: vector length");
    VecT<S> out(static_cast<std::size_t>(m.rows), S(0.0));
    for (int i = 0; i < m.rows; ++i) out[static_cast<std::size_t>(i)] = dot(m.row(i), x);
    return out;
}

} // namespace dvgen
