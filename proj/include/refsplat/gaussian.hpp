#pragma once

#include "refsplat/camera.hpp"
#include "refsplat/sh.hpp"
#include "refsplat/vecmath.hpp"

namespace refsplat {

/// Oriented planar Gaussian disk: position, orthonormal tangent pair and
/// per-axis scales, plus opacity / material / SH lighting attributes.
/// Values here are activated (constrained) quantities; the trainable raw
/// storage lives in Scene.
struct Gaussian2D {
    Vec3 position{0, 0, 0};
    Vec3 tangent_u{1, 0, 0};
    Vec3 tangent_v{0, 1, 0};
    double scale_u = 1.0, scale_v = 1.0;
    double opacity = 1.0;
    Vec3 albedo{0.5, 0.5, 0.5};
    double metallic = 0.0;
    double roughness = 0.1;
    SHBlock diffuse_sh{3};
    SHBlock indirect_sh{2};

    bool frame_orthonormal(double tol = 1e-6) const {
        return std::abs(tangent_u.norm() - 1.0) < tol &&
               std::abs(tangent_v.norm() - 1.0) < tol &&
               std::abs(tangent_u.dot(tangent_v)) < tol;
    }
};

/// Ellipsoid primitive for the 3D-vs-2D ablation.
struct Gaussian3D {
    Vec3 position{0, 0, 0};
    Quat rotation{1, 0, 0, 0};
    Vec3 scale{1, 1, 1};
    double opacity = 1.0;
    Vec3 albedo{0.5, 0.5, 0.5};
    double metallic = 0.0;
    double roughness = 0.1;
    SHBlock diffuse_sh{3};
    SHBlock indirect_sh{2};
};

/// Geometric normal t_u x t_v (unit for an orthonormal frame).
inline Vec3 gaussian_normal(const Gaussian2D& g) {
    return g.tangent_u.cross(g.tangent_v).normalized();
}

/// View-facing normal: flipped so n . (cam_pos - position) >= 0.
inline Vec3 gaussian_normal(const Gaussian2D& g, Vec3 cam_pos) {
    Vec3 n = gaussian_normal(g);
    return n.dot(cam_pos - g.position) >= 0.0 ? n : -n;
}

/// Homogeneous splat-to-world transform with columns
/// (s_u t_u, s_v t_v, 0, p); maps (u, v, 1, 1) to the world point
/// p + u s_u t_u + v s_v t_v.
Mat4 splat_to_world(const Gaussian2D& g);

/// Screen-space 2x2 covariance of a 3D Gaussian through the affine
/// approximation of perspective projection at the center. Sets *culled when
/// the center is behind the near plane (result undefined in that case).
Mat2 project_covariance_3d(const Gaussian3D& g, const Camera& cam, bool* culled,
                           double near_plane = 0.01);

}  // namespace refsplat
