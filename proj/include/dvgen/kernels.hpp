#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "dvgen/linalg.hpp"

namespace dvgen {

/// ARD squared-exponential kernel hyperparameters plus observation-noise
/// variance, all log-parameterized so gradient steps stay unconstrained:
///   k(a,b) = sigma_ard^2 * exp(-0.5 * sum_j omega_j * (a_j - b_j)^2)
/// with sigma_ard^2 = exp(2*log_sigma_ard), omega_j = exp(log_omega[j]) and
/// noise variance exp(log_noise). Tying all omega_j gives the plain RBF case.
template <class S>
struct ArdKernelParamsT {
    S log_sigma_ard = S(0.0);
    std::vector<S> log_omega;
    S log_noise = S(0.0);

    static ArdKernelParamsT init(int dim) {
        ArdKernelParamsT p;
        p.log_sigma_ard = S(0.0);
        p.log_omega.assign(static_cast<std::size_t>(dim), S(0.0));
        p.log_noise = S(std::log(0.01));
        return p;
    }

    int dim() const { return static_cast<int>(log_omega.size()); }
    S signal_variance() const {
        using std::exp;
        return exp(S(2.0) * log_sigma_ard);
    }
    S noise_variance() const {
        using std::exp;
        return exp(log_noise);
    }

    std::size_t param_count() const { return log_omega.size() + 2; }

    void pack(std::vector<S>& out) const {
        out.push_back(log_sigma_ard);
        out.insert(out.end(), log_omega.begin(), log_omega.end());
        out.push_back(log_noise);
    }

    static ArdKernelParamsT unpack(std::span<const S> flat, int dim) {
        ArdKernelParamsT p;
        p.log_sigma_ard = flat[0];
        p.log_omega.assign(flat.begin() + 1, flat.begin() + 1 + dim);
        p.log_noise = flat[static_cast<std::size_t>(dim) + 1];
        return p;
    }
};

using ArdKernelParams = ArdKernelParamsT<double>;

/// Precomputed exp(log_omega) for matrix builds.
template <class S>
std::vector<S> ard_weights(const ArdKernelParamsT<S>& p) {
    using std::exp;
    std::vector<S> w;
    w.reserve(p.log_omega.size());
    for (const S& lo : p.log_omega) w.push_back(exp(lo));
    return w;
}

template <class S>
S kernel_eval_weighted(const S& signal_var, std::span<const S> weights, std::span<const S> a,
                       std::span<const S> b) {
    using std::exp;
    S q(0.0);
    for (std::size_t j = 0; j < weights.size(); ++j) {
        const S d = a[j] - b[j];
        q += weights[j] * d * d;
    }
    return signal_var * exp(S(-0.5) * q);
}

template <class S>
S kernel_eval_generic(const ArdKernelParamsT<S>& p, std::span<const S> a, std::span<const S> b) {
    if (a.size() != b.size() || static_cast<int>(a.size()) != p.dim())
        throw DimensionMismatch("kernel_eval: input dims");
    const std::vector<S> w = ard_weights(p);
    return kernel_eval_weighted(p.signal_variance(), std::span<const S>(w), a, b);
}

/// Cross-covariance matrix (K)_{ij} = k(A_i, B_j). A and B are row-per-point.
template <class S>
MatT<S> kernel_matrix_generic(const ArdKernelParamsT<S>& p, const MatT<S>& A, const MatT<S>& B) {
    if (A.cols != p.dim() || B.cols != p.dim())
        throw DimensionMismatch("kernel_matrix: point dims don't match kernel");
    const std::vector<S> w = ard_weights(p);
    const S sv = p.signal_variance();
    MatT<S> K(A.rows, B.rows);
    for (int i = 0; i < A.rows; ++i)
        for (int j = 0; j < B.rows; ++j)
            K(i, j) = kernel_eval_weighted(sv, std::span<const S>(w), A.row(i), B.row(j));
    return K;
}

double kernel_eval(const ArdKernelParams& p, const Vector& a, const Vector& b);
Matrix kernel_matrix(const ArdKernelParams& p, const std::vector<Vector>& A,
                     const std::vector<Vector>& B);

/// Stacks a list of points into a row-per-point matrix.
Matrix stack_points(const std::vector<Vector>& points);

} // namespace dvgen
