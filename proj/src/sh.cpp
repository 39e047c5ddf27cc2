#include "refsplat/sh.hpp"

#include <cassert>

namespace refsplat {

// Basis constants, degree 0..3.
namespace {
constexpr double kC0 = 0.28209479177387814;   // 1/(2 sqrt(pi))
constexpr double kC1 = 0.4886025119029199;    // sqrt(3/(4 pi))
constexpr double kC2[5] = {1.0925484305920792, 1.0925484305920792, 0.31539156525252005,
                           1.0925484305920792, 0.5462742152960396};
constexpr double kC3[7] = {0.5900435899266435, 2.890611442640554, 0.4570457994644658,
                           0.3731763325901154, 0.4570457994644658, 1.4453057213202769,
                           0.5900435899266435};
}  // namespace

void sh_basis(int degree, Vec3 dir, double* out) {
    double x = dir.x, y = dir.y, z = dir.z;

    out[0] = kC0;
    if (degree < 1) return;
    out[1] = -kC1 * y;
    out[2] = kC1 * z;
    out[3] = -kC1 * x;
    if (degree < 2) return;
    double xx = x * x, yy = y * y, zz = z * z;
    double xy = x * y, yz = y * z, xz = x * z;
    out[4] = kC2[0] * xy;
    out[5] = -kC2[1] * yz;
    out[6] = kC2[2] * (2.0 * zz - xx - yy);
    out[7] = -kC2[3] * xz;
    out[8] = kC2[4] * (xx - yy);
    if (degree < 3) return;
    out[9] = -kC3[0] * y * (3.0 * xx - yy);
    out[10] = kC3[1] * xy * z;
    out[11] = -kC3[2] * y * (4.0 * zz - xx - yy);
    out[12] = kC3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy);
    out[13] = -kC3[4] * x * (4.0 * zz - xx - yy);
    out[14] = kC3[5] * z * (xx - yy);
    out[15] = -kC3[6] * x * (xx - 3.0 * yy);
}

void sh_basis_grad(int degree, Vec3 dir, Vec3* out) {
    double x = dir.x, y = dir.y, z = dir.z;

    out[0] = {0, 0, 0};
    if (degree < 1) return;
    out[1] = {0, -kC1, 0};
    out[2] = {0, 0, kC1};
    out[3] = {-kC1, 0, 0};
    if (degree < 2) return;
    double xx = x * x, yy = y * y, zz = z * z;
    out[4] = {kC2[0] * y, kC2[0] * x, 0};
    out[5] = {0, -kC2[1] * z, -kC2[1] * y};
    out[6] = {-2.0 * kC2[2] * x, -2.0 * kC2[2] * y, 4.0 * kC2[2] * z};
    out[7] = {-kC2[3] * z, 0, -kC2[3] * x};
    out[8] = {2.0 * kC2[4] * x, -2.0 * kC2[4] * y, 0};
    if (degree < 3) return;
    out[9] = {-kC3[0] * 6.0 * x * y, -kC3[0] * (3.0 * xx - 3.0 * yy), 0};
    out[10] = {kC3[1] * y * z, kC3[1] * x * z, kC3[1] * x * y};
    out[11] = {kC3[2] * 2.0 * x * y, -kC3[2] * (4.0 * zz - xx - 3.0 * yy), -kC3[2] * 8.0 * y * z};
    out[12] = {-kC3[3] * 6.0 * x * z, -kC3[3] * 6.0 * y * z, kC3[3] * (6.0 * zz - 3.0 * xx - 3.0 * yy)};
    out[13] = {-kC3[4] * (4.0 * zz - 3.0 * xx - yy), kC3[4] * 2.0 * x * y, -kC3[4] * 8.0 * x * z};
    out[14] = {kC3[5] * 2.0 * x * z, -kC3[5] * 2.0 * y * z, kC3[5] * (xx - yy)};
    out[15] = {-kC3[6] * (3.0 * xx - 3.0 * yy), kC3[6] * 6.0 * x * y, 0};
}

Vec3 eval_sh(int degree, const double* coeffs, Vec3 dir) {
    assert(std::abs(dir.norm() - 1.0) < 1e-6);
    dir = dir.normalized();
    double basis[16];
    sh_basis(degree, dir, basis);
    int n = sh_coeff_count(degree);
    Vec3 out{0, 0, 0};
    for (int k = 0; k < n; ++k) {
        double b = basis[k];
        out.x += coeffs[3 * k + 0] * b;
        out.y += coeffs[3 * k + 1] * b;
        out.z += coeffs[3 * k + 2] * b;
    }
    return out;
}

Vec3 eval_sh(const SHBlock& block, Vec3 dir) {
    return eval_sh(block.degree, &block.coeffs[0].x, dir);
}

Vec3 eval_sh_backward(int degree, const double* coeffs, Vec3 dir, Vec3 upstream,
                      double* dcoeffs) {
    double basis[16];
    Vec3 grads[16];
    sh_basis(degree, dir, basis);
    sh_basis_grad(degree, dir, grads);
    int n = sh_coeff_count(degree);
    Vec3 ddir{0, 0, 0};
    for (int k = 0; k < n; ++k) {
        if (dcoeffs) {
            dcoeffs[3 * k + 0] += upstream.x * basis[k];
            dcoeffs[3 * k + 1] += upstream.y * basis[k];
            dcoeffs[3 * k + 2] += upstream.z * basis[k];
        }
        double cdotu = coeffs[3 * k + 0] * upstream.x + coeffs[3 * k + 1] * upstream.y +
                       coeffs[3 * k + 2] * upstream.z;
        ddir += grads[k] * cdotu;
    }
    return ddir;
}

}  // namespace refsplat
