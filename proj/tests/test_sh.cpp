#include "doctest.h"
#include "refsplat/oracle/fd_gradient.hpp"
#include "refsplat/rng.hpp"
#include "refsplat/sh.hpp"

using namespace refsplat;

TEST_CASE("sh: degree-0 constant block evaluates to c * Y00") {
    SHBlock b(0);
    b.coeffs[0] = {1, 1, 1};
    Rng rng(7);
    for (int i = 0; i < 8; ++i) {
        Vec3 out = eval_sh(b, rng.uniform_sphere());
        CHECK(out.x == doctest::Approx(0.2820948).epsilon(1e-6));
        CHECK(out.y == doctest::Approx(0.2820948).epsilon(1e-6));
        CHECK(out.z == doctest::Approx(0.2820948).epsilon(1e-6));
    }
}

TEST_CASE("sh: odd-parity Y1(z) flips sign with direction") {
    SHBlock b(1);
    b.coeffs[2] = {0.7, -0.3, 1.2};  // k=2 is the z-linear basis
    Vec3 up = eval_sh(b, {0, 0, 1});
    Vec3 down = eval_sh(b, {0, 0, -1});
    CHECK(up.x == doctest::Approx(-down.x).epsilon(1e-12));
    CHECK(up.y == doctest::Approx(-down.y).epsilon(1e-12));
    CHECK(up.z == doctest::Approx(-down.z).epsilon(1e-12));
}

TEST_CASE("sh: sphere average of a random degree-2 block equals the DC term") {
    // Monte Carlo sphere-average oracle: all bases above l=0 integrate to zero.
    SHBlock b(2);
    Rng rng(123);
    for (auto& c : b.coeffs) c = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    Vec3 mean{0, 0, 0};
    const int n = 10000;
    for (int i = 0; i < n; ++i) mean += eval_sh(b, rng.uniform_sphere());
    mean = mean / double(n);
    Vec3 expect = b.coeffs[0] * 0.28209479177387814;
    // MC standard error of a bounded degree-2 basis sum at n=1e4
    CHECK(std::abs(mean.x - expect.x) < 0.05);
    CHECK(std::abs(mean.y - expect.y) < 0.05);
    CHECK(std::abs(mean.z - expect.z) < 0.05);
}

TEST_CASE("sh: evaluation is linear in coefficients") {
    Rng rng(5);
    SHBlock a(3), b(3);
    for (auto& c : a.coeffs) c = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    for (auto& c : b.coeffs) c = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    double s = 1.7, t = -0.4;
    SHBlock mix(3);
    for (int k = 0; k < mix.count(); ++k) mix.coeffs[k] = a.coeffs[k] * s + b.coeffs[k] * t;
    for (int i = 0; i < 16; ++i) {
        Vec3 d = rng.uniform_sphere();
        Vec3 lhs = eval_sh(mix, d);
        Vec3 rhs = eval_sh(a, d) * s + eval_sh(b, d) * t;
        CHECK(lhs.x == doctest::Approx(rhs.x).epsilon(1e-13));
        CHECK(lhs.y == doctest::Approx(rhs.y).epsilon(1e-13));
        CHECK(lhs.z == doctest::Approx(rhs.z).epsilon(1e-13));
    }
}

TEST_CASE("sh: basis direction gradient matches finite differences") {
    Rng rng(42);
    const double h = 1e-6;
    for (int trial = 0; trial < 10; ++trial) {
        Vec3 d = rng.uniform_sphere();
        Vec3 grads[16];
        sh_basis_grad(3, d, grads);
        for (int axis = 0; axis < 3; ++axis) {
            Vec3 dp = d, dm = d;
            dp[axis] += h;
            dm[axis] -= h;
            double bp[16], bm[16];
            sh_basis(3, dp, bp);
            sh_basis(3, dm, bm);
            for (int k = 0; k < 16; ++k) {
                double fd = (bp[k] - bm[k]) / (2 * h);
                CHECK(grads[k][axis] == doctest::Approx(fd).epsilon(1e-4));
            }
        }
    }
}

TEST_CASE("sh: eval_sh_backward matches finite differences") {
    Rng rng(99);
    int degree = 2;
    int nc = sh_coeff_count(degree);
    std::vector<double> coeffs(size_t(3 * nc));
    for (auto& c : coeffs) c = rng.uniform(-1, 1);
    Vec3 dir = rng.uniform_sphere();
    Vec3 upstream{0.3, -1.1, 0.6};

    std::vector<double> dcoeffs(coeffs.size(), 0.0);
    Vec3 ddir = eval_sh_backward(degree, coeffs.data(), dir, upstream, dcoeffs.data());

    auto loss = [&] {
        Vec3 v = eval_sh(degree, coeffs.data(), dir.normalized());
        return v.dot(upstream);
    };
    for (size_t i = 0; i < coeffs.size(); ++i) {
        double fd = oracle::fd_gradient_one(loss, &coeffs[i], 1e-5);
        CHECK(dcoeffs[i] == doctest::Approx(fd).epsilon(1e-5));
    }
    // direction gradient is checked against the raw polynomial (no renorm)
    auto loss_dir = [&] {
        double basis[16];
        sh_basis(degree, dir, basis);
        Vec3 v{0, 0, 0};
        for (int k = 0; k < nc; ++k)
            v += Vec3{coeffs[3 * k], coeffs[3 * k + 1], coeffs[3 * k + 2]} * basis[k];
        return v.dot(upstream);
    };
    for (int axis = 0; axis < 3; ++axis) {
        double fd = oracle::fd_gradient_one(loss_dir, &dir[axis], 1e-6);
        CHECK(ddir[axis] == doctest::Approx(fd).epsilon(1e-5));
    }
}
