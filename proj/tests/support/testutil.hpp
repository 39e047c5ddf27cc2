#pragma once

#include "refsplat/camera.hpp"
#include "refsplat/rng.hpp"
#include "refsplat/scene.hpp"

namespace refsplat::testutil {

// Random cloud of splats in front of a lookat camera, with randomized
// attributes and SH blocks. Used across the raster/shading/loss tests.
inline Scene random_scene_for_camera(int count, uint64_t seed,
                                     PrimitiveKind kind = PrimitiveKind::Splat2D,
                                     double spread = 0.6, double scale_lo = -2.2,
                                     double scale_hi = -0.7) {
    SceneInitConfig cfg;
    cfg.count = count;
    cfg.seed = seed;
    cfg.radius = spread;
    Scene s = make_random_scene(cfg, kind);
    Rng rng(seed ^ 0xabcdef);
    for (int i = 0; i < count; ++i) {
        s.set_opacity(i, rng.uniform(0.2, 0.95));
        s.set_albedo(i, {rng.uniform(0.05, 0.95), rng.uniform(0.05, 0.95),
                         rng.uniform(0.05, 0.95)});
        s.set_metallic(i, rng.uniform(0.05, 0.95));
        s.set_roughness(i, rng.uniform(0.05, 0.95));
        s.log_scale[i] = {rng.uniform(scale_lo, scale_hi), rng.uniform(scale_lo, scale_hi),
                          rng.uniform(scale_lo, scale_hi)};
        for (int k = 0; k < s.nc_diffuse() * 3; ++k)
            s.diffuse_sh[size_t(i) * 3 * s.nc_diffuse() + k] = rng.uniform(-0.5, 0.8);
        for (int k = 0; k < s.nc_indirect() * 3; ++k)
            s.indirect_sh[size_t(i) * 3 * s.nc_indirect() + k] = rng.uniform(-0.3, 0.6);
    }
    return s;
}

inline Camera test_camera(int w = 32, int h = 32, double dist = 3.0, double az = 0.4,
                          double el = 0.5) {
    Vec3 eye{dist * std::cos(az) * std::cos(el), dist * std::sin(az) * std::cos(el),
             dist * std::sin(el)};
    return make_lookat_camera(eye, {0, 0, 0}, {0, 0, 1}, 0.7, w, h);
}

}  // namespace refsplat::testutil
