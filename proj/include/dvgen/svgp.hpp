#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "dvgen/exact_gp.hpp"
#include "dvgen/kernels.hpp"
#include "dvgen/numerics.hpp"
#include "dvgen/rng.hpp"

namespace dvgen {

/// Index into flat lower-triangular storage (row-major, j <= i).
inline std::size_t tri_index(int i, int j) {
    return static_cast<std::size_t>(i) * (i + 1) / 2 + static_cast<std::size_t>(j);
}

inline std::size_t tri_size(int m) { return static_cast<std::size_t>(m) * (m + 1) / 2; }

/// Sparse variational GP with M inducing locations shared across outputs and
/// an independent variational Gaussian q(u_k) = N(m_k, S_k) per output.
/// S_k is kept positive definite by construction: it is stored as a raw
/// lower-triangular vector whose diagonal passes through softplus.
template <class S>
struct SvgpModelT {
    ArdKernelParamsT<S> kernel;
    MatT<S> inducing;                  // M x d
    std::vector<VecT<S>> var_mean;     // output_dim vectors of length M
    std::vector<VecT<S>> var_chol_raw; // output_dim vectors of length M(M+1)/2
    int output_dim = 0;

    int inducing_count() const { return inducing.rows; }
    int input_dim() const { return inducing.cols; }

    std::size_t param_count() const {
        return kernel.param_count() + inducing.a.size() +
               static_cast<std::size_t>(output_dim) *
                   (static_cast<std::size_t>(inducing.rows) + tri_size(inducing.rows));
    }

    void pack(std::vector<S>& out) const {
        kernel.pack(out);
        out.insert(out.end(), inducing.a.begin(), inducing.a.end());
        for (const auto& m : var_mean) out.insert(out.end(), m.begin(), m.end());
        for (const auto& r : var_chol_raw) out.insert(out.end(), r.begin(), r.end());
    }

    static SvgpModelT unpack(std::span<const S> flat, int d, int m_points, int d_out) {
        SvgpModelT model;
        std::size_t at = 0;
        model.kernel = ArdKernelParamsT<S>::unpack(flat.subspan(at, static_cast<std::size_t>(d) + 2), d);
        at += static_cast<std::size_t>(d) + 2;
        model.inducing = MatT<S>(m_points, d,
                                 std::vector<S>(flat.begin() + at, flat.begin() + at + static_cast<std::size_t>(m_points) * d));
        at += static_cast<std::size_t>(m_points) * d;
        model.output_dim = d_out;
        model.var_mean.resize(static_cast<std::size_t>(d_out));
        for (auto& mv : model.var_mean) {
            mv.assign(flat.begin() + at, flat.begin() + at + m_points);
            at += static_cast<std::size_t>(m_points);
        }
        model.var_chol_raw.resize(static_cast<std::size_t>(d_out));
        for (auto& rv : model.var_chol_raw) {
            rv.assign(flat.begin() + at, flat.begin() + at + tri_size(m_points));
            at += tri_size(m_points);
        }
        return model;
    }
};

using SvgpModel = SvgpModelT<double>;

/// Expands raw lower-triangular storage into a full lower factor with the
/// softplus-positive diagonal.
template <class S>
MatT<S> variational_chol(std::span<const S> raw, int m) {
    MatT<S> L(m, m);
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < i; ++j) L(i, j) = raw[tri_index(i, j)];
        L(i, i) = softplus(raw[tri_index(i, i)]);
    }
    return L;
}

/// Inverse of variational_chol's diagonal map: x -> log(exp(x) - 1).
inline double inverse_softplus(double y) {
    return y > 30.0 ? y : std::log(std::expm1(y));
}

/// Stores a concrete lower factor L into raw storage.
Vector raw_from_chol(const Matrix& L);

/// M inducing rows drawn (without replacement when possible) from data rows.
Matrix init_inducing_from_data(const Matrix& X, int m_points, Rng& rng);

SvgpModel svgp_init(int input_dim, int output_dim, int m_points);

// ---- generic core (double for inference, ad::Var for training) -------------

template <class S>
struct SvgpPosteriorOps {
    MatT<S> chol_kzz; // jittered factor of K_ZZ
    std::vector<MatT<S>> chol_s;

    static SvgpPosteriorOps build(const SvgpModelT<S>& model) {
        SvgpPosteriorOps ops;
        MatT<S> kzz = kernel_matrix_generic(model.kernel, model.inducing, model.inducing);
        ops.chol_kzz = cholesky_jittered(kzz);
        ops.chol_s.reserve(model.var_chol_raw.size());
        for (const auto& raw : model.var_chol_raw)
            ops.chol_s.push_back(variational_chol(std::span<const S>(raw), model.inducing_count()));
        return ops;
    }
};

/// Diagonal predictive at one query: mean_k = k*' Kzz^-1 m_k and
/// var_k = k** - k*' Kzz^-1 k* + k*' Kzz^-1 S_k Kzz^-1 k*.
/// Variances come back unclamped; callers clamp for reporting and floor for
/// reparameterized sampling.
template <class S>
void svgp_predict_point(const SvgpModelT<S>& model, const SvgpPosteriorOps<S>& ops,
                        std::span<const S> query, VecT<S>& mean_out, VecT<S>& var_out) {
    using std::exp;
    const int m = model.inducing_count();
    const std::vector<S> w = ard_weights(model.kernel);
    const S sv = model.kernel.signal_variance();
    VecT<S> k_star(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i)
        k_star[static_cast<std::size_t>(i)] =
            kernel_eval_weighted(sv, std::span<const S>(w), model.inducing.row(i), query);

    const VecT<S> alpha = solve_lower(ops.chol_kzz, std::span<const S>(k_star));
    const VecT<S> a = solve_lower_transpose(ops.chol_kzz, std::span<const S>(alpha));
    const S q_star = sv - dot(std::span<const S>(alpha), std::span<const S>(alpha));

    const int d_out = model.output_dim;
    mean_out.assign(static_cast<std::size_t>(d_out), S(0.0));
    var_out.assign(static_cast<std::size_t>(d_out), S(0.0));
    VecT<S> lt_a(static_cast<std::size_t>(m));
    for (int k = 0; k < d_out; ++k) {
        mean_out[static_cast<std::size_t>(k)] =
            dot(std::span<const S>(a), std::span<const S>(model.var_mean[static_cast<std::size_t>(k)]));
        const MatT<S>& L = ops.chol_s[static_cast<std::size_t>(k)];
        // (L' a)_j = sum_{i>=j} L(i,j) a_i
        for (int j = 0; j < m; ++j) {
            S s(0.0);
            for (int i = j; i < m; ++i) s += L(i, j) * a[static_cast<std::size_t>(i)];
            lt_a[static_cast<std::size_t>(j)] = s;
        }
        var_out[static_cast<std::size_t>(k)] =
            q_star + dot(std::span<const S>(lt_a), std::span<const S>(lt_a));
    }
}

/// KL(q(u_k) || N(0, K_ZZ)) summed over outputs.
template <class S>
S svgp_kl_generic(const SvgpModelT<S>& model, const SvgpPosteriorOps<S>& ops) {
    using std::log;
    const int m = model.inducing_count();
    S kl(0.0);
    VecT<S> col(static_cast<std::size_t>(m));
    for (int k = 0; k < model.output_dim; ++k) {
        const MatT<S>& L = ops.chol_s[static_cast<std::size_t>(k)];
        S trace(0.0);
        for (int j = 0; j < m; ++j) {
            for (int i = 0; i < m; ++i) col[static_cast<std::size_t>(i)] = i >= j ? L(i, j) : S(0.0);
            const VecT<S> sol = solve_lower(ops.chol_kzz, std::span<const S>(col));
            trace += dot(std::span<const S>(sol), std::span<const S>(sol));
        }
        const VecT<S> lm =
            solve_lower(ops.chol_kzz, std::span<const S>(model.var_mean[static_cast<std::size_t>(k)]));
        const S maha = dot(std::span<const S>(lm), std::span<const S>(lm));
        S log_det_s(0.0);
        for (int i = 0; i < m; ++i) log_det_s += log(L(i, i));
        log_det_s = S(2.0) * log_det_s;
        const S log_det_kzz = log_det_from_cholesky(ops.chol_kzz);
        kl += S(0.5) * (trace + maha - S(static_cast<double>(m)) + log_det_kzz - log_det_s);
    }
    return kl;
}

/// Evidence lower bound in the factorized form
///   (dataset_size/batch) * sum_i sum_k E_{q(f_ik)}[log N(y_ik | f_ik, s2)] - sum_k KL_k
/// with the Gaussian expected log-likelihood in closed form.
template <class S>
S svgp_elbo_generic(const SvgpModelT<S>& model, const MatT<S>& X, const MatT<S>& Y,
                    double dataset_size) {
    using std::log;
    const int n = X.rows;
    if (n < 1) throw InvalidArgument("elbo: empty batch");
    if (Y.rows != n || Y.cols != model.output_dim) throw DimensionMismatch("elbo: target shape");
    if (X.cols != model.input_dim()) throw DimensionMismatch("elbo: input dim");
    if (dataset_size < static_cast<double>(n))
        throw InvalidArgument("elbo: dataset_size smaller than batch");

    const auto ops = SvgpPosteriorOps<S>::build(model);
    const S noise = model.kernel.noise_variance();
    const S log_norm = S(-0.5) * (log(noise) + S(std::log(2.0 * std::numbers::pi)));

    S ell(0.0);
    VecT<S> mean, var;
    for (int i = 0; i < n; ++i) {
        svgp_predict_point(model, ops, X.row(i), mean, var);
        for (int k = 0; k < model.output_dim; ++k) {
            const S resid = Y(i, k) - mean[static_cast<std::size_t>(k)];
            ell += log_norm -
                   (resid * resid + var[static_cast<std::size_t>(k)]) / (S(2.0) * noise);
        }
    }
    const double scale = dataset_size / static_cast<double>(n);
    return S(scale) * ell - svgp_kl_generic(model, ops);
}

// ---- double-facing API ------------------------------------------------------

double svgp_elbo(const SvgpModel& model, const Matrix& batch_x, const Matrix& batch_y,
                 double dataset_size);

double svgp_kl(const SvgpModel& model);

/// Entropy of N(m, S) given the lower factor of S.
double gaussian_entropy(const Matrix& chol_s);

struct SvgpPrediction {
    Matrix mean;     // n x d_out
    Matrix var;      // n x d_out, clamped at zero
    double min_raw_var = 0.0; // most negative pre-clamp variance seen
};

SvgpPrediction svgp_predict(const SvgpModel& model, const Matrix& queries);

/// mean + sqrt(var) * eps, eps ~ N(0, I_{d_out}).
Vector svgp_sample(const SvgpModel& model, const Vector& query, Rng& rng);

/// Scalar the trigger consumes: mean of the per-output predictive variances.
double svgp_variance_statistic(const SvgpModel& model, const Vector& query);

struct SvgpTrainState {
    AdamState adam;
    ParamLayout layout;
};

SvgpTrainState svgp_train_state(const SvgpModel& model);

/// One Adam step ascending the ELBO over kernel, inducing and variational
/// parameters. Returns the ELBO value before the step.
double svgp_train_step(SvgpModel& model, const Matrix& batch_x, const Matrix& batch_y,
                       double dataset_size, double lr, SvgpTrainState& state);

/// Closed-form optimal q(u) for a Gaussian likelihood at fixed kernel and
/// inducing locations (the collapsed-bound solution); used to reach the
/// tightness limit without long optimization runs.
void svgp_set_optimal_variational(SvgpModel& model, const Matrix& X, const Matrix& Y);

} // namespace dvgen
