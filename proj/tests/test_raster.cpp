#include "doctest.h"
#include "refsplat/oracle/naive_blend.hpp"
#include "refsplat/raster.hpp"
#include "support/testutil.hpp"

using namespace refsplat;

namespace {

// 1x1 camera whose single pixel ray is the optical axis
Camera axis_camera(Vec3 eye, Vec3 target) {
    Camera cam = make_lookat_camera(eye, target, {0, 1, 0}, kPi / 2, 1, 1);
    return cam;
}

Scene single_splat_scene(Vec3 pos, double opacity, Vec3 albedo) {
    SceneInitConfig cfg;
    cfg.count = 1;
    Scene s = make_random_scene(cfg, PrimitiveKind::Splat2D);
    s.position[0] = pos;
    s.quat[0] = {1, 0, 0, 0};
    s.log_scale[0] = {0, 0, 0};
    s.set_opacity(0, opacity);
    s.set_albedo(0, albedo);
    return s;
}

}  // namespace

TEST_CASE("ray_splat_intersect: central hit has weight one") {
    Gaussian2D g;  // axis-aligned unit splat at the origin
    Camera cam = axis_camera({0, 0, 5}, {0, 0, 0});
    SplatHit hit;
    REQUIRE(ray_splat_intersect(g, cam, 0.5, 0.5, hit));
    CHECK(hit.u == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(hit.v == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(hit.weight == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(hit.depth == doctest::Approx(5.0).epsilon(1e-12));
}

TEST_CASE("ray_splat_intersect: gaussian falloff at (u,v) = (1,0)") {
    Gaussian2D g;
    // camera looking straight down -z from above; target (1, 0, 0) offsets the
    // hit to u = 1 by construction of a second ray
    Camera cam = axis_camera({1, 0, 5}, {1, 0, 0});
    SplatHit hit;
    REQUIRE(ray_splat_intersect(g, cam, 0.5, 0.5, hit));
    CHECK(std::abs(hit.u * hit.u + hit.v * hit.v - 1.0) < 1e-9);
    CHECK(hit.weight == doctest::Approx(std::exp(-0.5)).epsilon(1e-9));
}

TEST_CASE("ray_splat_intersect: parallel plane misses") {
    Gaussian2D g;  // normal +z
    // ray traveling inside the splat plane
    Camera cam = axis_camera({5, 0, 0}, {0, 0, 0});
    SplatHit hit;
    CHECK(!ray_splat_intersect(g, cam, 0.5, 0.5, hit));
}

TEST_CASE("ray_splat_intersect: depth equals an analytic ray-plane oracle") {
    Rng rng(17);
    int checked = 0;
    for (int i = 0; i < 1000; ++i) {
        Gaussian2D g;
        g.position = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
        Quat q = Quat::from_axis_angle(rng.uniform_sphere(), rng.uniform(0, kTwoPi));
        Mat3 R = q.to_matrix();
        g.tangent_u = R.col(0);
        g.tangent_v = R.col(1);
        g.scale_u = std::exp(rng.uniform(-1.5, 0.5));
        g.scale_v = std::exp(rng.uniform(-1.5, 0.5));
        Camera cam = testutil::test_camera(16, 16, rng.uniform(2.5, 5.0),
                                           rng.uniform(0, kTwoPi), rng.uniform(-1, 1));
        double px = rng.uniform(0.0, 16.0), py = rng.uniform(0.0, 16.0);
        SplatHit hit;
        if (!ray_splat_intersect(g, cam, px, py, hit, 0.01, 1e9, 0.0)) continue;
        ++checked;
        // independent oracle: parametric ray vs plane n . (x - p) = 0
        Vec3 o = cam.position();
        Vec3 d = cam.ray_dir(px, py);
        Vec3 n = R.col(2);
        double t = (g.position - o).dot(n) / d.dot(n);
        double depth = cam.depth_of(o + d * t);
        CHECK(std::abs(depth - hit.depth) < 1e-9);
    }
    CHECK(checked > 200);
}

TEST_CASE("rasterize: opaque singleton covers the pixel") {
    Scene s = single_splat_scene({0, 0, 0}, 1.0 - 1e-12, {1.0 - 1e-12, 1e-12, 1e-12});
    Camera cam = axis_camera({0, 0, 4}, {0, 0, 0});
    RenderOptions opt;
    opt.channels = kChAlbedo | kChDepth;
    GBuffer gb = rasterize(s, cam, opt);
    CHECK(gb.alpha.at(0, 0) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(gb.albedo.at(0, 0, 0) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(gb.albedo.at(0, 0, 1) == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(gb.depth.at(0, 0) == doctest::Approx(4.0).epsilon(1e-9));
}

TEST_CASE("rasterize: two stacked half-opacity splats follow the blending arithmetic") {
    SceneInitConfig cfg;
    cfg.count = 2;
    Scene s = make_random_scene(cfg, PrimitiveKind::Splat2D);
    for (int i = 0; i < 2; ++i) {
        s.quat[i] = {1, 0, 0, 0};
        s.log_scale[i] = {0, 0, 0};
        s.set_opacity(i, 0.5);
    }
    s.position[0] = {0, 0, 1.0};  // front
    s.position[1] = {0, 0, 0.0};  // behind
    s.set_albedo(0, {0.8, 0.2, 0.4});
    s.set_albedo(1, {0.1, 0.9, 0.6});
    Camera cam = axis_camera({0, 0, 4}, {0, 0, 0});
    RenderOptions opt;
    opt.channels = kChAlbedo;
    GBuffer gb = rasterize(s, cam, opt);
    Vec3 x1 = s.albedo(0), x2 = s.albedo(1);
    Vec3 expect = x1 * 0.5 + x2 * 0.25;
    CHECK(gb.albedo.at(0, 0, 0) == doctest::Approx(expect.x).epsilon(1e-9));
    CHECK(gb.albedo.at(0, 0, 1) == doctest::Approx(expect.y).epsilon(1e-9));
    CHECK(gb.albedo.at(0, 0, 2) == doctest::Approx(expect.z).epsilon(1e-9));
    CHECK(gb.alpha.at(0, 0) == doctest::Approx(0.75).epsilon(1e-9));
}

TEST_CASE("rasterize: empty scene produces a zero g-buffer") {
    Scene s;
    s.kind = PrimitiveKind::Splat2D;
    Camera cam = testutil::test_camera(8, 8);
    RenderOptions opt;
    GBuffer gb = rasterize(s, cam, opt);
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) {
            CHECK(gb.alpha.at(x, y) == 0.0);
            CHECK(gb.albedo.at(x, y, 0) == 0.0);
        }
}

TEST_CASE("rasterize: matches the naive full-sort blending oracle") {
    Rng rng(5150);
    for (int trial = 0; trial < 6; ++trial) {
        Scene s = testutil::random_scene_for_camera(50, 1000 + trial);
        int size = 8 << (trial % 3);  // 8, 16, 32
        Camera cam = testutil::test_camera(size, size, 3.0, rng.uniform(0, kTwoPi),
                                           rng.uniform(-0.8, 0.8));
        RenderOptions opt;
        opt.channels = kChDeferredSet;
        GBuffer tiled = rasterize(s, cam, opt);
        GBuffer naive = oracle::naive_rasterize(s, cam, opt);
        double worst = 0;
        for (int y = 0; y < size; ++y)
            for (int x = 0; x < size; ++x) {
                worst = std::max(worst, std::abs(tiled.alpha.at(x, y) - naive.alpha.at(x, y)));
                for (int c = 0; c < 3; ++c) {
                    worst = std::max(worst, std::abs(tiled.albedo.at(x, y, c) -
                                                     naive.albedo.at(x, y, c)));
                    worst = std::max(worst, std::abs(tiled.normal.at(x, y, c) -
                                                     naive.normal.at(x, y, c)));
                    worst = std::max(worst, std::abs(tiled.diffuse.at(x, y, c) -
                                                     naive.diffuse.at(x, y, c)));
                }
                worst = std::max(worst,
                                 std::abs(tiled.metallic.at(x, y) - naive.metallic.at(x, y)));
                worst = std::max(
                    worst, std::abs(tiled.roughness.at(x, y) - naive.roughness.at(x, y)));
                worst =
                    std::max(worst, std::abs(tiled.depth.at(x, y) - naive.depth.at(x, y)));
            }
        CHECK(worst < 1e-6);
    }
}

TEST_CASE("rasterize: tiling scheme does not change the result bitwise") {
    Scene s = testutil::random_scene_for_camera(80, 77);
    Camera cam = testutil::test_camera(48, 40);
    RenderOptions tiled;
    tiled.tile_size = 16;
    RenderOptions global;
    global.tile_size = 4096;  // single tile
    GBuffer a = rasterize(s, cam, tiled);
    GBuffer b = rasterize(s, cam, global);
    REQUIRE(a.albedo.data().size() == b.albedo.data().size());
    for (size_t i = 0; i < a.albedo.data().size(); ++i)
        CHECK(a.albedo.data()[i] == b.albedo.data()[i]);
    for (size_t i = 0; i < a.alpha.data().size(); ++i)
        CHECK(a.alpha.data()[i] == b.alpha.data()[i]);
    for (size_t i = 0; i < a.depth.data().size(); ++i)
        CHECK(a.depth.data()[i] == b.depth.data()[i]);
}

TEST_CASE("rasterize: transmittance is non-increasing and alpha bounded") {
    Scene s = testutil::random_scene_for_camera(60, 4242);
    Camera cam = testutil::test_camera(24, 24);
    RenderOptions opt;
    GBuffer gb = rasterize(s, cam, opt);
    for (int y = 0; y < 24; ++y)
        for (int x = 0; x < 24; ++x) {
            double a = gb.alpha.at(x, y);
            CHECK(a >= 0.0);
            CHECK(a <= 1.0 + 1e-12);
            // premultiplied bounded attributes stay within [0, alpha]
            CHECK(gb.metallic.at(x, y) >= -1e-12);
            CHECK(gb.metallic.at(x, y) <= a + 1e-12);
            CHECK(gb.roughness.at(x, y) <= a + 1e-12);
            for (int c = 0; c < 3; ++c) {
                CHECK(gb.albedo.at(x, y, c) >= -1e-12);
                CHECK(gb.albedo.at(x, y, c) <= a + 1e-12);
            }
        }
}

TEST_CASE("rasterize: feature selection is independent") {
    Scene s = testutil::random_scene_for_camera(40, 11);
    Camera cam = testutil::test_camera(16, 16);
    RenderOptions full;
    full.channels = kChDeferredSet;
    RenderOptions only_albedo;
    only_albedo.channels = kChAlbedo;
    GBuffer a = rasterize(s, cam, full);
    GBuffer b = rasterize(s, cam, only_albedo);
    for (size_t i = 0; i < a.albedo.data().size(); ++i)
        CHECK(a.albedo.data()[i] == b.albedo.data()[i]);
    CHECK(b.metallic.empty());
}

TEST_CASE("rasterize: 3d ellipsoid mode matches a per-pixel reference") {
    // simple reference: evaluate every gaussian's screen-space form directly
    Scene s = testutil::random_scene_for_camera(30, 909, PrimitiveKind::Ellipsoid3D);
    Camera cam = testutil::test_camera(24, 24);
    RenderOptions opt;
    opt.channels = kChAlbedo | kChDepth;
    GBuffer gb = rasterize(s, cam, opt);

    struct Frag {
        int i;
        double z, alpha;
    };
    for (int py = 0; py < 24; py += 5) {
        for (int px = 0; px < 24; px += 5) {
            std::vector<Frag> frags;
            for (int i = 0; i < s.count(); ++i) {
                bool culled;
                Gaussian3D g = s.gaussian3d(i);
                Mat2 cov = project_covariance_3d(g, cam, &culled, opt.near_plane);
                if (culled) continue;
                Vec2 mean;
                double z;
                cam.project(g.position, mean, z);
                Mat2 ci = cov.inverse();
                double dx = px + 0.5 - mean.x, dy = py + 0.5 - mean.y;
                double q = ci.m[0][0] * dx * dx + (ci.m[0][1] + ci.m[1][0]) * dx * dy +
                           ci.m[1][1] * dy * dy;
                if (q > 9.0) continue;
                double w = std::exp(-0.5 * q);
                if (w < opt.weight_cutoff) continue;
                frags.push_back({i, z, s.opacity(i) * w});
            }
            std::sort(frags.begin(), frags.end(), [](const Frag& a, const Frag& b) {
                return a.z < b.z || (a.z == b.z && a.i < b.i);
            });
            double T = 1.0, A = 0.0;
            Vec3 alb{0, 0, 0};
            for (const Frag& f : frags) {
                alb += s.albedo(f.i) * (f.alpha * T);
                A += f.alpha * T;
                T *= 1.0 - f.alpha;
                if (T < opt.min_transmittance) break;
            }
            CHECK(std::abs(gb.alpha.at(px, py) - A) < 1e-9);
            CHECK(std::abs(gb.albedo.at(px, py, 0) - alb.x) < 1e-9);
        }
    }
}
