#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "dvgen/kernels.hpp"
#include "dvgen/rng.hpp"
#include "support/oracles.hpp"

using namespace dvgen;

namespace {

ArdKernelParams random_params(int d, Rng& rng) {
    ArdKernelParams p = ArdKernelParams::init(d);
    p.log_sigma_ard = rng.uniform(-0.5, 0.5);
    for (auto& lo : p.log_omega) lo = rng.uniform(-1.0, 1.0);
    p.log_noise = rng.uniform(-4.0, -1.0);
    return p;
}

} // namespace

TEST_CASE("kernel_eval: zero distance gives the signal variance") {
    ArdKernelParams p = ArdKernelParams::init(3);
    p.log_sigma_ard = 0.35;
    Vector z{0.1, -0.4, 2.0};
    CHECK(kernel_eval(p, z, z) == doctest::Approx(std::exp(2.0 * 0.35)).epsilon(1e-12));
}

TEST_CASE("kernel_eval: zero weights make the kernel constant") {
    ArdKernelParams p = ArdKernelParams::init(2);
    for (auto& lo : p.log_omega) lo = -1e9; // omega -> 0
    Vector a{0.0, 0.0}, b{100.0, -50.0};
    CHECK(kernel_eval(p, a, b) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("kernel_eval: hand-evaluated 1-D case") {
    ArdKernelParams p = ArdKernelParams::init(1);
    p.log_sigma_ard = 0.0;          // sigma_ard = 1
    p.log_omega[0] = std::log(2.0); // omega = 2
    Vector a{0.0}, b{1.0};
    // exponent = -0.5 * 2 * 1 = -1
    CHECK(kernel_eval(p, a, b) == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
}

TEST_CASE("kernel_eval: dimension mismatch") {
    ArdKernelParams p = ArdKernelParams::init(2);
    CHECK_THROWS_AS(kernel_eval(p, {1.0, 2.0}, {1.0}), DimensionMismatch);
    CHECK_THROWS_AS(kernel_eval(p, {1.0}, {1.0}), DimensionMismatch);
}

TEST_CASE("kernel_eval: exact symmetry and boundedness properties") {
    Rng rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        const int d = 1 + static_cast<int>(rng.uniform_int(0, 4));
        ArdKernelParams p = random_params(d, rng);
        Vector a(static_cast<std::size_t>(d)), b(static_cast<std::size_t>(d));
        for (auto& x : a) x = rng.uniform(-3.0, 3.0);
        for (auto& x : b) x = rng.uniform(-3.0, 3.0);
        const double kab = kernel_eval(p, a, b);
        const double kba = kernel_eval(p, b, a);
        CHECK(kab == kba); // same fp operations in either argument order
        CHECK(kab > 0.0);
        CHECK(kab <= std::exp(2.0 * p.log_sigma_ard) * (1.0 + 1e-15));
    }
}

TEST_CASE("kernel_matrix: single point and duplicate points") {
    ArdKernelParams p = ArdKernelParams::init(2);
    p.log_sigma_ard = 0.5;
    const double sv = std::exp(1.0);
    std::vector<Vector> one{{0.3, -0.7}};
    Matrix k1 = kernel_matrix(p, one, one);
    CHECK(k1.rows == 1);
    CHECK(k1(0, 0) == doctest::Approx(sv).epsilon(1e-12));

    std::vector<Vector> dup{{1.0, 2.0}, {1.0, 2.0}};
    Matrix k2 = kernel_matrix(p, dup, dup);
    for (double x : k2.a) CHECK(x == doctest::Approx(sv).epsilon(1e-12));
}

TEST_CASE("kernel_matrix: matches the entry-wise kernel_eval loop") {
    Rng rng(23);
    ArdKernelParams p = random_params(2, rng);
    std::vector<Vector> a, b;
    for (int i = 0; i < 3; ++i) a.push_back({rng.uniform(-2, 2), rng.uniform(-2, 2)});
    for (int i = 0; i < 4; ++i) b.push_back({rng.uniform(-2, 2), rng.uniform(-2, 2)});
    Matrix k = kernel_matrix(p, a, b);
    REQUIRE(k.rows == 3);
    REQUIRE(k.cols == 4);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 4; ++j)
            CHECK(k(i, j) == doctest::Approx(kernel_eval(p, a[static_cast<std::size_t>(i)],
                                                         b[static_cast<std::size_t>(j)]))
                                 .epsilon(1e-14));
}

TEST_CASE("kernel_matrix: K + noise is PSD for random point sets") {
    Rng rng(31);
    for (int trial = 0; trial < 10; ++trial) {
        const int d = 1 + static_cast<int>(rng.uniform_int(0, 2));
        const int n = 2 + static_cast<int>(rng.uniform_int(0, 18));
        ArdKernelParams p = random_params(d, rng);
        std::vector<Vector> pts;
        for (int i = 0; i < n; ++i) {
            Vector v(static_cast<std::size_t>(d));
            for (auto& x : v) x = rng.uniform(-3.0, 3.0);
            pts.push_back(v);
        }
        Matrix k = kernel_matrix(p, pts, pts);
        for (int i = 0; i < n; ++i) k(i, i) += p.noise_variance();
        const Vector eig = oracles::jacobi_eigenvalues(k);
        for (double e : eig) CHECK(e >= -1e-10);
    }
}

TEST_CASE("kernel_matrix entries: gradients w.r.t. params pass finite differences") {
    Rng rng(41);
    const int d = 2;
    Matrix a(2, d), b(3, d);
    for (auto& x : a.a) x = rng.uniform(-1.5, 1.5);
    for (auto& x : b.a) x = rng.uniform(-1.5, 1.5);
    for (int i = 0; i < a.rows; ++i) {
        for (int j = 0; j < b.rows; ++j) {
            ScalarFn f = [&, i, j](ad::Tape&, std::span<const ad::Var> q) {
                const auto kp = ArdKernelParamsT<ad::Var>::unpack(q, d);
                MatT<ad::Var> av(a.rows, d), bv(b.rows, d);
                for (std::size_t t = 0; t < a.a.size(); ++t) av.a[t] = ad::Var(a.a[t]);
                for (std::size_t t = 0; t < b.a.size(); ++t) bv.a[t] = ad::Var(b.a[t]);
                return kernel_matrix_generic(kp, av, bv)(i, j);
            };
            Vector p{0.2, -0.3, 0.5, std::log(0.01)};
            CHECK(oracles::gradient_check(f, p) < 1e-4);
        }
    }
}
