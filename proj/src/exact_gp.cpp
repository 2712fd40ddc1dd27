#include "dvgen/exact_gp.hpp"

namespace dvgen {

PredictiveDistribution exact_predict(const ExactGpModel& model, const Matrix& queries) {
    const GpDataset& data = model.data;
    if (data.size() < 1) throw InvalidArgument("exact_predict: empty dataset");
    if (queries.cols != data.input_dim()) throw DimensionMismatch("exact_predict: query dim");

    Matrix K = kernel_matrix_generic(model.kernel, data.X, data.X);
    const double noise = model.kernel.noise_variance();
    for (int i = 0; i < K.rows; ++i) K(i, i) += noise;
    const Matrix L = cholesky_jittered(K);

    const Vector alpha = solve_cholesky(L, std::span<const double>(data.y));
    const Matrix k_star = kernel_matrix_generic(model.kernel, queries, data.X); // m x n
    const int m = queries.rows;

    PredictiveDistribution out;
    out.mean.resize(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i)
        out.mean[static_cast<std::size_t>(i)] = dot(k_star.row(i), std::span<const double>(alpha));

    // cov = K** - V'V with V = L^-1 K_{X,*}
    Matrix V(data.size(), m);
    Vector col(static_cast<std::size_t>(data.size()));
    for (int j = 0; j < m; ++j) {
        for (int i = 0; i < data.size(); ++i) col[static_cast<std::size_t>(i)] = k_star(j, i);
        const Vector v = solve_lower(L, std::span<const double>(col));
        for (int i = 0; i < data.size(); ++i) V(i, j) = v[static_cast<std::size_t>(i)];
    }
    out.cov = kernel_matrix_generic(model.kernel, queries, queries);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j) {
            double s = 0.0;
            for (int k = 0; k < data.size(); ++k) s += V(k, i) * V(k, j);
            out.cov(i, j) -= s;
        }
    // symmetrize and clamp the tiny negative diagonals roundoff produces
    for (int i = 0; i < m; ++i)
        for (int j = i + 1; j < m; ++j) {
            const double s = 0.5 * (out.cov(i, j) + out.cov(j, i));
            out.cov(i, j) = s;
            out.cov(j, i) = s;
        }
    out.var.resize(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i) {
        if (out.cov(i, i) < 0.0 && out.cov(i, i) > -1e-10) out.cov(i, i) = 0.0;
        out.var[static_cast<std::size_t>(i)] = std::max(0.0, out.cov(i, i));
    }
    return out;
}

double log_marginal_likelihood(const ExactGpModel& model) {
    return exact_lml_generic<double>(model.kernel, model.data.X, model.data.y);
}

FitResult fit_hyperparameters(const ExactGpModel& model, int steps, double lr) {
    if (steps < 1) throw InvalidArgument("fit_hyperparameters: steps must be >= 1");
    const int dim = model.kernel.dim();
    Vector p;
    model.kernel.pack(p);

    const ScalarFn objective = [&model, dim](ad::Tape&, std::span<const ad::Var> q) {
        const auto kernel = ArdKernelParamsT<ad::Var>::unpack(q, dim);
        return exact_lml_generic(kernel, model.data.X, model.data.y);
    };

    FitResult result{model, 0.0, 0.0, 0};
    ad::Tape tape;
    auto current = value_and_gradient(objective, p, tape);
    result.initial_lml = current.value;
    int halvings = 0;
    for (int step = 0; step < steps; ++step) {
        Vector candidate = p;
        for (std::size_t i = 0; i < p.size(); ++i) candidate[i] += lr * current.gradient[i];
        ValueAndGradient next;
        bool ok = true;
        try {
            next = value_and_gradient(objective, candidate, tape);
        } catch (const NonFiniteValue&) {
            ok = false;
        } catch (const NotPositiveDefinite&) {
            ok = false;
        }
        if (ok && next.value >= current.value) {
            p = std::move(candidate);
            current = std::move(next);
            result.accepted_steps += 1;
        } else {
            if (++halvings > 10) break;
            lr *= 0.5;
        }
    }
    result.final_lml = current.value;
    result.model.kernel = ArdKernelParams::unpack(std::span<const double>(p), dim);
    return result;
}

} // namespace dvgen
