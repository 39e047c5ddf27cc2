#pragma once

#include <vector>

#include "refsplat/vecmath.hpp"

namespace refsplat {

/// Real spherical harmonics (graphics convention, Ramamoorthi/Hanrahan
/// normalization), degrees 0..3. Coefficient blocks store RGB triples per
/// basis function: coeffs[k] is the RGB coefficient of basis k, with the
/// usual (l, m) flattening k = l*(l+1) + m.
struct SHBlock {
    int degree = 0;
    std::vector<Vec3> coeffs;  // (degree+1)^2 entries

    explicit SHBlock(int deg = 0) : degree(deg), coeffs(size_t((deg + 1) * (deg + 1))) {}

    int count() const { return (degree + 1) * (degree + 1); }
};

inline int sh_coeff_count(int degree) { return (degree + 1) * (degree + 1); }

/// Basis polynomial values Y_k(dir) for all k up to `degree`, evaluated on
/// the raw xyz coordinates (callers pass unit directions).
void sh_basis(int degree, Vec3 dir, double* out);

/// d(Y_k)/d(dir) treating dir as free xyz coordinates.
void sh_basis_grad(int degree, Vec3 dir, Vec3* out);

/// Sum_k coeffs[k] * Y_k(dir) per channel. No clamping; shading clamps at use.
Vec3 eval_sh(const SHBlock& block, Vec3 dir);

/// Flat-array variant: coeffs is n_coeffs RGB triples (r0 g0 b0 r1 g1 b1 ...).
Vec3 eval_sh(int degree, const double* coeffs, Vec3 dir);

/// Backward of eval_sh: accumulates coefficient gradients and returns the
/// direction gradient. `dcoeffs` may be null when only ddir is wanted.
Vec3 eval_sh_backward(int degree, const double* coeffs, Vec3 dir, Vec3 upstream,
                      double* dcoeffs);

}  // namespace refsplat
