#include "dvgen/svgp.hpp"

#include <algorithm>
#include <numeric>

namespace dvgen {

Vector raw_from_chol(const Matrix& L) {
    const int m = L.rows;
    Vector raw(tri_size(m), 0.0);
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < i; ++j) raw[tri_index(i, j)] = L(i, j);
        raw[tri_index(i, i)] = inverse_softplus(L(i, i));
    }
    return raw;
}

Matrix init_inducing_from_data(const Matrix& X, int m_points, Rng& rng) {
    if (X.rows < 1) throw InvalidArgument("init_inducing_from_data: empty data");
    std::vector<int> order(static_cast<std::size_t>(X.rows));
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);
    Matrix Z(m_points, X.cols);
    for (int i = 0; i < m_points; ++i) {
        const int src = order[static_cast<std::size_t>(i) % order.size()];
        for (int j = 0; j < X.cols; ++j) Z(i, j) = X(src, j);
        if (i >= X.rows) // duplicates get a small deterministic nudge
            for (int j = 0; j < X.cols; ++j) Z(i, j) += 1e-3 * rng.normal();
    }
    return Z;
}

SvgpModel svgp_init(int input_dim, int output_dim, int m_points) {
    SvgpModel model;
    model.kernel = ArdKernelParams::init(input_dim);
    model.inducing = Matrix(m_points, input_dim);
    model.output_dim = output_dim;
    model.var_mean.assign(static_cast<std::size_t>(output_dim),
                          Vector(static_cast<std::size_t>(m_points), 0.0));
    Vector raw(tri_size(m_points), 0.0);
    for (int i = 0; i < m_points; ++i) raw[tri_index(i, i)] = inverse_softplus(1.0);
    model.var_chol_raw.assign(static_cast<std::size_t>(output_dim), raw);
    return model;
}

double svgp_elbo(const SvgpModel& model, const Matrix& batch_x, const Matrix& batch_y,
                 double dataset_size) {
    return svgp_elbo_generic<double>(model, batch_x, batch_y, dataset_size);
}

double svgp_kl(const SvgpModel& model) {
    const auto ops = SvgpPosteriorOps<double>::build(model);
    return svgp_kl_generic(model, ops);
}

double gaussian_entropy(const Matrix& chol_s) {
    const int m = chol_s.rows;
    double half_log_det = 0.0;
    for (int i = 0; i < m; ++i) half_log_det += std::log(chol_s(i, i));
    return 0.5 * m * std::log(2.0 * std::numbers::pi * std::numbers::e) + half_log_det;
}

SvgpPrediction svgp_predict(const SvgpModel& model, const Matrix& queries) {
    if (queries.cols != model.input_dim()) throw DimensionMismatch("svgp_predict: query dim");
    const auto ops = SvgpPosteriorOps<double>::build(model);
    SvgpPrediction out;
    out.mean = Matrix(queries.rows, model.output_dim);
    out.var = Matrix(queries.rows, model.output_dim);
    Vector mean, var;
    for (int i = 0; i < queries.rows; ++i) {
        svgp_predict_point(model, ops, queries.row(i), mean, var);
        for (int k = 0; k < model.output_dim; ++k) {
            out.mean(i, k) = mean[static_cast<std::size_t>(k)];
            out.min_raw_var = std::min(out.min_raw_var, var[static_cast<std::size_t>(k)]);
            out.var(i, k) = std::max(0.0, var[static_cast<std::size_t>(k)]);
        }
    }
    return out;
}

Vector svgp_sample(const SvgpModel& model, const Vector& query, Rng& rng) {
    Matrix q(1, static_cast<int>(query.size()));
    for (std::size_t j = 0; j < query.size(); ++j) q(0, static_cast<int>(j)) = query[j];
    const SvgpPrediction pred = svgp_predict(model, q);
    Vector out(static_cast<std::size_t>(model.output_dim));
    for (int k = 0; k < model.output_dim; ++k)
        out[static_cast<std::size_t>(k)] = pred.mean(0, k) + std::sqrt(pred.var(0, k)) * rng.normal();
    return out;
}

double svgp_variance_statistic(const SvgpModel& model, const Vector& query) {
    Matrix q(1, static_cast<int>(query.size()));
    for (std::size_t j = 0; j < query.size(); ++j) q(0, static_cast<int>(j)) = query[j];
    const SvgpPrediction pred = svgp_predict(model, q);
    double s = 0.0;
    for (int k = 0; k < model.output_dim; ++k) s += pred.var(0, k);
    return s / model.output_dim;
}

SvgpTrainState svgp_train_state(const SvgpModel& model) {
    SvgpTrainState state;
    const int d = model.input_dim();
    const int m = model.inducing_count();
    state.layout.add("kernel", static_cast<std::size_t>(d) + 2);
    state.layout.add("inducing", static_cast<std::size_t>(m) * d);
    for (int k = 0; k < model.output_dim; ++k)
        state.layout.add("q_mean[" + std::to_string(k) + "]", static_cast<std::size_t>(m));
    for (int k = 0; k < model.output_dim; ++k)
        state.layout.add("q_chol_raw[" + std::to_string(k) + "]", tri_size(m));
    state.adam = AdamState::zeros(model.param_count());
    return state;
}

double svgp_train_step(SvgpModel& model, const Matrix& batch_x, const Matrix& batch_y,
                       double dataset_size, double lr, SvgpTrainState& state) {
    const int d = model.input_dim();
    const int m = model.inducing_count();
    const int d_out = model.output_dim;
    Vector p;
    model.pack(p);

    const ScalarFn objective = [&](ad::Tape&, std::span<const ad::Var> q) {
        const auto candidate = SvgpModelT<ad::Var>::unpack(q, d, m, d_out);
        MatT<ad::Var> xs(batch_x.rows, batch_x.cols);
        for (std::size_t i = 0; i < batch_x.a.size(); ++i) xs.a[i] = ad::Var(batch_x.a[i]);
        MatT<ad::Var> ys(batch_y.rows, batch_y.cols);
        for (std::size_t i = 0; i < batch_y.a.size(); ++i) ys.a[i] = ad::Var(batch_y.a[i]);
        return svgp_elbo_generic(candidate, xs, ys, dataset_size);
    };

    const auto vg = value_and_gradient(objective, p);
    Vector neg(vg.gradient.size());
    for (std::size_t i = 0; i < neg.size(); ++i) neg[i] = -vg.gradient[i];
    adam_step(p, neg, state.adam, lr);
    model = SvgpModel::unpack(std::span<const double>(p), d, m, d_out);
    return vg.value;
}

void svgp_set_optimal_variational(SvgpModel& model, const Matrix& X, const Matrix& Y) {
    if (Y.cols != model.output_dim) throw DimensionMismatch("optimal variational: target shape");
    const int m = model.inducing_count();
    const int n = X.rows;
    const double noise = model.kernel.noise_variance();

    Matrix kzz = kernel_matrix_generic(model.kernel, model.inducing, model.inducing);
    const Matrix kzx = kernel_matrix_generic(model.kernel, model.inducing, X); // m x n

    // Sigma = Kzz + (1/s2) Kzx Kxz
    Matrix sigma = kzz;
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j) {
            double s = 0.0;
            for (int t = 0; t < n; ++t) s += kzx(i, t) * kzx(j, t);
            sigma(i, j) += s / noise;
        }
    const Matrix chol_sigma = cholesky_jittered(sigma);

    // S* = Kzz Sigma^-1 Kzz, m*_k = (1/s2) Kzz Sigma^-1 Kzx y_k
    Matrix w(m, m); // Sigma^-1 Kzz
    Vector col(static_cast<std::size_t>(m));
    for (int j = 0; j < m; ++j) {
        for (int i = 0; i < m; ++i) col[static_cast<std::size_t>(i)] = kzz(i, j);
        const Vector sol = solve_cholesky(chol_sigma, std::span<const double>(col));
        for (int i = 0; i < m; ++i) w(i, j) = sol[static_cast<std::size_t>(i)];
    }
    Matrix s_star(m, m);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j) {
            double s = 0.0;
            for (int t = 0; t < m; ++t) s += kzz(i, t) * w(t, j);
            s_star(i, j) = s;
        }
    for (int i = 0; i < m; ++i)
        for (int j = i + 1; j < m; ++j) {
            const double s = 0.5 * (s_star(i, j) + s_star(j, i));
            s_star(i, j) = s;
            s_star(j, i) = s;
        }
    const Matrix chol_s = cholesky_jittered(s_star);
    const Vector raw = raw_from_chol(chol_s);

    Vector rhs(static_cast<std::size_t>(m));
    for (int k = 0; k < model.output_dim; ++k) {
        for (int i = 0; i < m; ++i) {
            double s = 0.0;
            for (int t = 0; t < n; ++t) s += kzx(i, t) * Y(t, k);
            rhs[static_cast<std::size_t>(i)] = s / noise;
        }
        const Vector sol = solve_cholesky(chol_sigma, std::span<const double>(rhs));
        for (int i = 0; i < m; ++i) {
            double s = 0.0;
            for (int t = 0; t < m; ++t) s += kzz(i, t) * sol[static_cast<std::size_t>(t)];
            model.var_mean[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)] = s;
        }
        model.var_chol_raw[static_cast<std::size_t>(k)] = raw;
    }
}

} // namespace dvgen
