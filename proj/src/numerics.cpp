#include "dvgen/numerics.hpp"

#include <cmath>

namespace dvgen {

Matrix cholesky_factor(const Matrix& m) {
    if (m.rows != m.cols) throw DimensionMismatch("cholesky_factor: matrix not square");
    if (!all_finite(std::span<const double>(m.a))) throw InvalidArgument("cholesky_factor: non-finite entry");
    double scale = 0.0;
    for (int i = 0; i < m.rows; ++i) scale = std::max(scale, std::abs(m(i, i)));
    for (int i = 0; i < m.rows; ++i)
        for (int j = 0; j < i; ++j)
            if (std::abs(m(i, j) - m(j, i)) > 1e-10 * std::max(1.0, scale))
                throw InvalidArgument("cholesky_factor: matrix not symmetric");
    return cholesky_jittered(m);
}

Matrix solve_psd(const Matrix& chol, const Matrix& b) {
    if (chol.rows != chol.cols) throw DimensionMismatch("solve_psd: factor not square");
    if (b.rows != chol.rows) throw DimensionMismatch("solve_psd: rhs rows != factor size");
    Matrix x(b.rows, b.cols);
    Vector col(static_cast<std::size_t>(b.rows));
    for (int j = 0; j < b.cols; ++j) {
        for (int i = 0; i < b.rows; ++i) col[static_cast<std::size_t>(i)] = b(i, j);
        Vector sol = solve_cholesky(chol, std::span<const double>(col));
        for (int i = 0; i < b.rows; ++i) x(i, j) = sol[static_cast<std::size_t>(i)];
    }
    return x;
}

ValueAndGradient value_and_gradient(const ScalarFn& f, const Vector& p, ad::Tape& tape) {
    tape.clear();
    std::vector<ad::Var> inputs;
    inputs.reserve(p.size());
    for (double x : p) inputs.push_back(tape.input(x));
    const ad::Var out = f(tape, inputs);
    if (!std::isfinite(out.val())) throw NonFiniteValue("value_and_gradient: f(p) is not finite");
    ValueAndGradient result{out.val(), Vector(p.size(), 0.0)};
    if (out.is_const()) return result; // f ignores p entirely
    tape.backward(out);
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double g = tape.adjoint(inputs[i]);
        if (!std::isfinite(g)) throw NonFiniteValue("value_and_gradient: non-finite partial");
        result.gradient[i] = g;
    }
    return result;
}

ValueAndGradient value_and_gradient(const ScalarFn& f, const Vector& p) {
    ad::Tape tape;
    return value_and_gradient(f, p, tape);
}

void adam_step(Vector& p, const Vector& g, AdamState& state, double lr, const AdamConfig& cfg) {
    if (p.size() != g.size() || p.size() != state.m.size() || p.size() != state.v.size())
        throw DimensionMismatch("adam_step: parameter/gradient/state sizes differ");
    state.t += 1;
    const double b1t = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
    const double b2t = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < p.size(); ++i) {
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g[i];
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
        const double m_hat = state.m[i] / b1t;
        const double v_hat = state.v[i] / b2t;
        p[i] -= lr * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
    }
}

} // namespace dvgen
