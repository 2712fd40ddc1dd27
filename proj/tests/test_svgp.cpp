#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "dvgen/svgp.hpp"
#include "support/oracles.hpp"

using namespace dvgen;

namespace {

struct Instance {
    SvgpModel model;
    Matrix X;
    Matrix Y;
};

Instance random_instance(int n, int d, int m, int d_out, Rng& rng, bool z_equals_x = false) {
    Instance inst;
    inst.X = Matrix(n, d);
    for (auto& v : inst.X.a) v = rng.uniform(-2.0, 2.0);
    inst.Y = Matrix(n, d_out);
    for (auto& v : inst.Y.a) v = rng.uniform(-1.5, 1.5);
    inst.model = svgp_init(d, d_out, m);
    inst.model.kernel.log_sigma_ard = rng.uniform(-0.3, 0.3);
    for (auto& lo : inst.model.kernel.log_omega) lo = rng.uniform(-0.7, 0.7);
    inst.model.kernel.log_noise = rng.uniform(-3.5, -1.0);
    if (z_equals_x) {
        inst.model.inducing = inst.X;
    } else {
        for (auto& v : inst.model.inducing.a) v = rng.uniform(-2.0, 2.0);
    }
    for (auto& mv : inst.model.var_mean)
        for (auto& v : mv) v = rng.uniform(-1.0, 1.0);
    for (auto& rv : inst.model.var_chol_raw)
        for (auto& v : rv) v = rng.uniform(-1.0, 0.5);
    return inst;
}

double summed_exact_lml(const SvgpModel& model, const Matrix& X, const Matrix& Y) {
    double total = 0.0;
    for (int k = 0; k < Y.cols; ++k) {
        ExactGpModel gp;
        gp.kernel = model.kernel;
        gp.data.X = X;
        gp.data.y.resize(static_cast<std::size_t>(X.rows));
        for (int i = 0; i < X.rows; ++i) gp.data.y[static_cast<std::size_t>(i)] = Y(i, k);
        total += log_marginal_likelihood(gp);
    }
    return total;
}

// Test-side route through the ELBO written as
//   E_q[log p(Y|u)] + E_q[log p(u|Z)] + H[q(u)]
// using explicit dense inverses; independent of the factorized production path.
double elbo_alternate_route(const SvgpModel& model, const Matrix& X, const Matrix& Y) {
    const int m = model.inducing_count();
    const int n = X.rows;
    const double s2 = model.kernel.noise_variance();
    Matrix kzz = kernel_matrix_generic(model.kernel, model.inducing, model.inducing);
    const Matrix kzz_inv = oracles::gauss_jordan_inverse(kzz);
    const Matrix kzx = kernel_matrix_generic(model.kernel, model.inducing, X);
    const double log_det_kzz = oracles::log_det_via_lu(kzz);

    double total = 0.0;
    for (int k = 0; k < model.output_dim; ++k) {
        const Matrix L = variational_chol(
            std::span<const double>(model.var_chol_raw[static_cast<std::size_t>(k)]), m);
        const Matrix S = oracles::matmul(L, oracles::transpose(L));
        const Vector& mu = model.var_mean[static_cast<std::size_t>(k)];

        // E_q[log p(y|u)] with the conditional-expectation correction terms
        double e_lik = 0.0;
        for (int i = 0; i < n; ++i) {
            Vector ki(static_cast<std::size_t>(m));
            for (int t = 0; t < m; ++t) ki[static_cast<std::size_t>(t)] = kzx(t, i);
            Vector ai(static_cast<std::size_t>(m), 0.0);
            for (int r = 0; r < m; ++r)
                for (int t = 0; t < m; ++t) ai[static_cast<std::size_t>(r)] += kzz_inv(r, t) * ki[static_cast<std::size_t>(t)];
            double mean_i = 0.0, lambda_i = 0.0, kQk = 0.0;
            for (int r = 0; r < m; ++r) {
                mean_i += ai[static_cast<std::size_t>(r)] * mu[static_cast<std::size_t>(r)];
                kQk += ai[static_cast<std::size_t>(r)] * ki[static_cast<std::size_t>(r)];
                for (int t = 0; t < m; ++t)
                    lambda_i += ai[static_cast<std::size_t>(r)] * S(r, t) * ai[static_cast<std::size_t>(t)];
            }
            const double q_ii = model.kernel.signal_variance() - kQk;
            const double resid = Y(i, k) - mean_i;
            e_lik += -0.5 * std::log(2.0 * std::numbers::pi * s2) -
                     (resid * resid) / (2.0 * s2) - (q_ii + lambda_i) / (2.0 * s2);
        }

        // E_q[log p(u|Z)]
        double trace = 0.0, maha = 0.0;
        for (int r = 0; r < m; ++r)
            for (int t = 0; t < m; ++t) {
                trace += kzz_inv(r, t) * S(t, r);
                maha += mu[static_cast<std::size_t>(r)] * kzz_inv(r, t) * mu[static_cast<std::size_t>(t)];
            }
        const double e_prior = -0.5 * (m * std::log(2.0 * std::numbers::pi) + log_det_kzz + trace + maha);
        const double entropy = gaussian_entropy(L);
        total += e_lik + e_prior + entropy;
    }
    return total;
}

} // namespace

TEST_CASE("gaussian_entropy: M=2 identity covariance") {
    Matrix L = Matrix::identity(2);
    CHECK(gaussian_entropy(L) == doctest::Approx(2.837877066).epsilon(1e-8));
}

TEST_CASE("KL is zero iff the variational matches the prior") {
    Rng rng(3);
    auto inst = random_instance(6, 2, 4, 1, rng);
    // m = 0, S = Kzz
    Matrix kzz = kernel_matrix_generic(inst.model.kernel, inst.model.inducing, inst.model.inducing);
    const Matrix L = cholesky_jittered(kzz);
    inst.model.var_mean[0].assign(4, 0.0);
    inst.model.var_chol_raw[0] = raw_from_chol(L);
    CHECK(std::abs(svgp_kl(inst.model)) < 1e-8);

    // any perturbation makes it strictly positive
    inst.model.var_mean[0][1] = 0.5;
    CHECK(svgp_kl(inst.model) > 1e-4);
}

TEST_CASE("KL is non-negative on random configurations") {
    Rng rng(9);
    for (int trial = 0; trial < 20; ++trial) {
        auto inst = random_instance(4, 2, 3, 2, rng);
        CHECK(svgp_kl(inst.model) >= -1e-10);
    }
}

TEST_CASE("elbo: prior-matched variational zeroes the KL term") {
    Rng rng(15);
    auto inst = random_instance(5, 1, 3, 1, rng);
    Matrix kzz = kernel_matrix_generic(inst.model.kernel, inst.model.inducing, inst.model.inducing);
    inst.model.var_mean[0].assign(3, 0.0);
    inst.model.var_chol_raw[0] = raw_from_chol(cholesky_jittered(kzz));
    const double kl = svgp_kl(inst.model);
    CHECK(std::abs(kl) < 1e-8);
    CHECK(std::isfinite(svgp_elbo(inst.model, inst.X, inst.Y, 5)));
}

TEST_CASE("elbo is deterministic and matches the alternate-route formulation") {
    Rng rng(21);
    for (int trial = 0; trial < 10; ++trial) {
        auto inst = random_instance(4 + trial % 3, 1 + trial % 2, 3, 1 + trial % 2, rng);
        const double a = svgp_elbo(inst.model, inst.X, inst.Y, inst.X.rows);
        const double b = svgp_elbo(inst.model, inst.X, inst.Y, inst.X.rows);
        CHECK(a == b);
        const double alt = elbo_alternate_route(inst.model, inst.X, inst.Y);
        CHECK(a == doctest::Approx(alt).epsilon(1e-8));
    }
}

TEST_CASE("elbo never exceeds the exact log marginal likelihood") {
    Rng rng(27);
    for (int trial = 0; trial < 30; ++trial) {
        const int n = 3 + static_cast<int>(rng.uniform_int(0, 5));
        const int d = 1 + static_cast<int>(rng.uniform_int(0, 2));
        const int m = 1 + static_cast<int>(rng.uniform_int(0, n - 1));
        const int d_out = 1 + static_cast<int>(rng.uniform_int(0, 1));
        auto inst = random_instance(n, d, m, d_out, rng);
        const double elbo = svgp_elbo(inst.model, inst.X, inst.Y, n);
        const double lml = summed_exact_lml(inst.model, inst.X, inst.Y);
        CHECK(elbo <= lml + 1e-6);
    }
}

TEST_CASE("elbo tightness: M=N, Z=X with the optimal variational") {
    Rng rng(33);
    for (int trial = 0; trial < 5; ++trial) {
        const int n = 4 + trial;
        auto inst = random_instance(n, 2, n, 2, rng, /*z_equals_x=*/true);
        svgp_set_optimal_variational(inst.model, inst.X, inst.Y);
        const double elbo = svgp_elbo(inst.model, inst.X, inst.Y, n);
        const double lml = summed_exact_lml(inst.model, inst.X, inst.Y);
        CHECK(elbo <= lml + 1e-6);
        CHECK(std::abs(elbo - lml) < 1e-3);
    }
}

TEST_CASE("svgp_predict: delta variational at an inducing input") {
    Rng rng(39);
    auto inst = random_instance(5, 2, 4, 1, rng);
    // S -> 0: strongly negative raw diagonal, zero off-diagonals
    Vector raw(tri_size(4), 0.0);
    for (int i = 0; i < 4; ++i) raw[tri_index(i, i)] = -40.0;
    inst.model.var_chol_raw[0] = raw;
    const int pick = 2;
    Matrix q(1, 2);
    for (int j = 0; j < 2; ++j) q(0, j) = inst.model.inducing(pick, j);
    const auto pred = svgp_predict(inst.model, q);
    CHECK(pred.mean(0, 0) == doctest::Approx(inst.model.var_mean[0][pick]).epsilon(1e-5));
    CHECK(pred.var(0, 0) < 1e-5);
}

TEST_CASE("svgp_predict: far query reverts to the prior") {
    Rng rng(45);
    auto inst = random_instance(5, 2, 4, 2, rng);
    Matrix q(1, 2, {500.0, -500.0});
    const auto pred = svgp_predict(inst.model, q);
    for (int k = 0; k < 2; ++k) {
        CHECK(pred.mean(0, k) == doctest::Approx(0.0).epsilon(1e-9));
        CHECK(pred.var(0, k) ==
              doctest::Approx(inst.model.kernel.signal_variance()).epsilon(1e-9));
    }
}

TEST_CASE("svgp_predict: variance clamped non-negative") {
    Rng rng(51);
    for (int trial = 0; trial < 10; ++trial) {
        auto inst = random_instance(5, 1, 5, 1, rng);
        Matrix q(3, 1);
        for (int i = 0; i < 3; ++i) q(i, 0) = rng.uniform(-3.0, 3.0);
        const auto pred = svgp_predict(inst.model, q);
        for (double v : pred.var.a) CHECK(v >= 0.0);
        CHECK(pred.min_raw_var > -1e-6); // healthy-run clamp magnitude
    }
}

TEST_CASE("svgp_sample: zero variance returns the mean; seeds reproduce") {
    Rng rng(57);
    auto inst = random_instance(5, 2, 4, 2, rng);
    Vector raw(tri_size(4), 0.0);
    for (int i = 0; i < 4; ++i) raw[tri_index(i, i)] = -40.0;
    inst.model.var_chol_raw[0] = raw;
    inst.model.var_chol_raw[1] = raw;
    Vector q{inst.model.inducing(1, 0), inst.model.inducing(1, 1)};

    Rng sampler_a(123), sampler_b(123);
    const Vector s1 = svgp_sample(inst.model, q, sampler_a);
    const Vector s2 = svgp_sample(inst.model, q, sampler_b);
    CHECK(s1[0] == s2[0]);
    CHECK(s1[1] == s2[1]);
    const auto pred = svgp_predict(inst.model, Matrix(1, 2, {q[0], q[1]}));
    CHECK(s1[0] == doctest::Approx(pred.mean(0, 0)).epsilon(1e-5));
}

TEST_CASE("svgp_sample: empirical mean of 10k draws matches the prediction") {
    Rng rng(63);
    auto inst = random_instance(6, 1, 4, 1, rng);
    Vector q{0.25};
    const auto pred = svgp_predict(inst.model, Matrix(1, 1, {0.25}));
    Rng sampler(99);
    double acc = 0.0;
    const int draws = 10000;
    for (int i = 0; i < draws; ++i) acc += svgp_sample(inst.model, q, sampler)[0];
    const double emp = acc / draws;
    const double tol = 3.0 * std::sqrt(pred.var(0, 0) / draws);
    CHECK(std::abs(emp - pred.mean(0, 0)) < tol + 1e-12);
}

TEST_CASE("svgp_train_step: lr=0 leaves every parameter unchanged") {
    Rng rng(69);
    auto inst = random_instance(8, 1, 3, 1, rng);
    Vector before;
    inst.model.pack(before);
    auto state = svgp_train_state(inst.model);
    svgp_train_step(inst.model, inst.X, inst.Y, 8, 0.0, state);
    Vector after;
    inst.model.pack(after);
    for (std::size_t i = 0; i < before.size(); ++i) CHECK(before[i] == after[i]);
}

TEST_CASE("svgp_train_step: windowed ELBO increases on 1-D sine data") {
    Rng rng(75);
    const int n = 50;
    Matrix X(n, 1), Y(n, 1);
    for (int i = 0; i < n; ++i) {
        X(i, 0) = rng.uniform(-3.0, 3.0);
        Y(i, 0) = std::sin(X(i, 0)) + 0.05 * rng.normal();
    }
    SvgpModel model = svgp_init(1, 1, 10);
    Rng init_rng(7);
    model.inducing = init_inducing_from_data(X, 10, init_rng);
    auto state = svgp_train_state(model);

    std::vector<double> curve;
    Rng batch_rng(11);
    for (int step = 0; step < 200; ++step) {
        Matrix bx(10, 1), by(10, 1);
        for (int i = 0; i < 10; ++i) {
            const int pick = static_cast<int>(batch_rng.uniform_int(0, n - 1));
            bx(i, 0) = X(pick, 0);
            by(i, 0) = Y(pick, 0);
        }
        curve.push_back(svgp_train_step(model, bx, by, n, 0.02, state));
    }
    auto window_mean = [&](int lo, int hi) {
        double s = 0.0;
        for (int i = lo; i < hi; ++i) s += curve[static_cast<std::size_t>(i)];
        return s / (hi - lo);
    };
    CHECK(window_mean(50, 100) > window_mean(0, 50));
    CHECK(window_mean(100, 150) > window_mean(50, 100));
    CHECK(window_mean(150, 200) > window_mean(100, 150));

    // trained or not, the bound against the exact evidence still holds
    const double final_elbo = svgp_elbo(model, X, Y, n);
    ExactGpModel exact;
    exact.kernel = model.kernel;
    exact.data.X = X;
    exact.data.y.assign(Y.a.begin(), Y.a.end());
    CHECK(final_elbo <= log_marginal_likelihood(exact) + 1e-6);
}

TEST_CASE("elbo gradients pass finite differences on a small instance") {
    Rng rng(81);
    auto inst = random_instance(6, 2, 4, 2, rng);
    const int d = 2, m = 4, d_out = 2;
    ScalarFn f = [&](ad::Tape&, std::span<const ad::Var> q) {
        const auto candidate = SvgpModelT<ad::Var>::unpack(q, d, m, d_out);
        MatT<ad::Var> xs(inst.X.rows, inst.X.cols);
        for (std::size_t i = 0; i < inst.X.a.size(); ++i) xs.a[i] = ad::Var(inst.X.a[i]);
        MatT<ad::Var> ys(inst.Y.rows, inst.Y.cols);
        for (std::size_t i = 0; i < inst.Y.a.size(); ++i) ys.a[i] = ad::Var(inst.Y.a[i]);
        return svgp_elbo_generic(candidate, xs, ys, 6);
    };
    Vector p;
    inst.model.pack(p);
    CHECK(oracles::gradient_check(f, p) < 1e-4);
}
