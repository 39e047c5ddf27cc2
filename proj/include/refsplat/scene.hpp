#pragma once

#include <string>
#include <vector>

#include "refsplat/gaussian.hpp"
#include "refsplat/rng.hpp"

namespace refsplat {

enum class PrimitiveKind : int32_t { Splat2D = 0, Ellipsoid3D = 1 };

/// Trainable scene: struct-of-arrays raw (pre-activation) parameters.
/// Activations: sigmoid for opacity / albedo / metallic / roughness,
/// exp for scales, quaternion normalization for the frame. SH coefficients
/// are unconstrained. log_scale.z is ignored for 2D splats.
struct Scene {
    PrimitiveKind kind = PrimitiveKind::Splat2D;
    int diffuse_sh_degree = 3;
    int indirect_sh_degree = 2;

    std::vector<Vec3> position;
    std::vector<Quat> quat;
    std::vector<Vec3> log_scale;
    std::vector<double> opacity_raw;
    std::vector<Vec3> albedo_raw;
    std::vector<double> metallic_raw;
    std::vector<double> roughness_raw;
    std::vector<double> diffuse_sh;   // count * 3 * nc_d, layout [g][coeff][rgb]
    std::vector<double> indirect_sh;  // count * 3 * nc_i

    int count() const { return int(position.size()); }
    int nc_diffuse() const { return sh_coeff_count(diffuse_sh_degree); }
    int nc_indirect() const { return sh_coeff_count(indirect_sh_degree); }

    void resize(int n);

    // activated accessors
    double opacity(int i) const { return sigmoid(opacity_raw[i]); }
    Vec3 albedo(int i) const {
        return {sigmoid(albedo_raw[i].x), sigmoid(albedo_raw[i].y), sigmoid(albedo_raw[i].z)};
    }
    double metallic(int i) const { return sigmoid(metallic_raw[i]); }
    double roughness(int i) const { return sigmoid(roughness_raw[i]); }
    Vec3 scales(int i) const {
        return {std::exp(log_scale[i].x), std::exp(log_scale[i].y), std::exp(log_scale[i].z)};
    }
    const double* diffuse_coeffs(int i) const { return &diffuse_sh[size_t(i) * 3 * nc_diffuse()]; }
    const double* indirect_coeffs(int i) const { return &indirect_sh[size_t(i) * 3 * nc_indirect()]; }

    /// Materializes the activated primitive (2D splat scenes).
    Gaussian2D gaussian2d(int i) const;
    /// Materializes the activated ellipsoid (3D scenes).
    Gaussian3D gaussian3d(int i) const;

    /// Writes activated values through the inverse activations.
    void set_opacity(int i, double v) { opacity_raw[i] = logit(v); }
    void set_albedo(int i, Vec3 v) {
        albedo_raw[i] = {logit(v.x), logit(v.y), logit(v.z)};
    }
    void set_metallic(int i, double v) { metallic_raw[i] = logit(v); }
    void set_roughness(int i, double v) { roughness_raw[i] = logit(v); }
    void set_scales(int i, Vec3 s) {
        log_scale[i] = {std::log(s.x), std::log(s.y), std::log(s.z)};
    }

    /// Renormalizes quaternions in place (run after every optimizer step).
    void normalize_frames();

    /// Checks the Gaussian2D/3D invariants (unit frames, bounded attributes,
    /// positive scales, finite values). Returns an empty string when clean.
    std::string validate() const;

    AABB bounding_box() const;

    /// Removes the selected gaussians, preserving order of the rest.
    void erase(const std::vector<int>& sorted_indices);
    /// Appends a copy of gaussian `src` and returns the new index.
    int append_copy(int src);
};

/// Scatter-accumulated raw-parameter gradients, shaped like Scene.
struct SceneGrads {
    std::vector<Vec3> position;
    std::vector<Quat> quat;
    std::vector<Vec3> log_scale;
    std::vector<double> opacity_raw;
    std::vector<Vec3> albedo_raw;
    std::vector<double> metallic_raw;
    std::vector<double> roughness_raw;
    std::vector<double> diffuse_sh;
    std::vector<double> indirect_sh;

    void resize_like(const Scene& s);
    void clear();
    void add(const SceneGrads& o);
};

struct SceneInitConfig {
    int count = 8000;
    Vec3 center{0, 0, 0};
    double radius = 1.0;          // uniform ball init
    double opacity = 0.1;
    Vec3 albedo{0.5, 0.5, 0.5};
    double metallic = 1e-4;       // adopted-from-prior default is configurable
    double roughness = 0.1;
    double diffuse_gray = 0.5;    // degree-0 SH set to this constant color
    uint64_t seed = 0;
};

/// Random-ball initialization with distance-based scales.
Scene make_random_scene(const SceneInitConfig& cfg, PrimitiveKind kind);

/// Re-initializes color/material/SH attributes to stage-0 defaults while
/// keeping geometry (position, frame, scales) and opacity untouched.
void reset_materials(Scene& scene, const SceneInitConfig& defaults);

}  // namespace refsplat
