#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "dvgen/kernels.hpp"
#include "dvgen/numerics.hpp"

namespace dvgen {

/// Single-output regression dataset; X is row-per-point.
struct GpDataset {
    Matrix X;
    Vector y;

    int size() const { return X.rows; }
    int input_dim() const { return X.cols; }
};

/// Exact GP with a fixed zero mean function. This is the closed-form
/// reference the sparse model is tested against.
struct ExactGpModel {
    ArdKernelParams kernel;
    GpDataset data;
};

/// Posterior over function values at query points. Full covariance is always
/// available; var is its (clamped) diagonal.
struct PredictiveDistribution {
    Vector mean;
    Matrix cov;
    Vector var;
};

PredictiveDistribution exact_predict(const ExactGpModel& model, const Matrix& queries);

/// log p(Y|X) = -1/2 (y' (K+s2 I)^-1 y + log|K+s2 I|) - n/2 log 2pi,
/// evaluated through one Cholesky factorization.
double log_marginal_likelihood(const ExactGpModel& model);

/// Generic-scalar marginal likelihood so hyperparameter gradients come off
/// the tape. Data stays as plain double constants.
template <class S>
S exact_lml_generic(const ArdKernelParamsT<S>& kernel, const Matrix& X, const Vector& y) {
    const int n = X.rows;
    if (n < 1) throw InvalidArgument("log_marginal_likelihood: empty dataset");
    if (X.cols != kernel.dim()) throw DimensionMismatch("log_marginal_likelihood: kernel dim");
    MatT<S> Xs(n, X.cols);
    for (std::size_t i = 0; i < X.a.size(); ++i) Xs.a[i] = S(X.a[i]);
    MatT<S> K = kernel_matrix_generic(kernel, Xs, Xs);
    const S noise = kernel.noise_variance();
    for (int i = 0; i < n; ++i) K(i, i) += noise;
    const MatT<S> L = cholesky_jittered(K);
    VecT<S> ys(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) ys[i] = S(y[i]);
    const VecT<S> alpha = solve_cholesky(L, std::span<const S>(ys));
    const S fit = dot(std::span<const S>(ys), std::span<const S>(alpha));
    const S logdet = log_det_from_cholesky(L);
    return S(-0.5) * (fit + logdet) - S(0.5 * n * std::log(2.0 * std::numbers::pi));
}

struct FitResult {
    ExactGpModel model;
    double initial_lml;
    double final_lml;
    int accepted_steps;
};

/// Gradient ascent on the marginal likelihood over the kernel parameters.
/// Monotone-accept: a step that lowers the LML is rolled back and the
/// learning rate halved, up to 10 halvings for the whole run.
FitResult fit_hyperparameters(const ExactGpModel& model, int steps, double lr);

} // namespace dvgen
