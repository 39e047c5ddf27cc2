#include <vector>

#include "doctest.h"
#include "refsplat/oracle/fd_gradient.hpp"
#include "refsplat/raster.hpp"
#include "support/testutil.hpp"

using namespace refsplat;

namespace {

// weighted scalar readout of the g-buffer so the upstream gradients are the
// fixed weight images
struct GBufferLoss {
    Image w_albedo, w_metallic, w_roughness, w_normal, w_diffuse, w_depth, w_alpha;

    static GBufferLoss random(int w, int h, uint64_t seed) {
        GBufferLoss l;
        Rng rng(seed);
        auto fill = [&](Image& img, int c) {
            img = Image(w, h, c);
            for (auto& v : img.data()) v = rng.uniform(-1, 1);
        };
        fill(l.w_albedo, 3);
        fill(l.w_metallic, 1);
        fill(l.w_roughness, 1);
        fill(l.w_normal, 3);
        fill(l.w_diffuse, 3);
        fill(l.w_depth, 1);
        fill(l.w_alpha, 1);
        return l;
    }

    double eval(const GBuffer& gb) const {
        double s = 0;
        auto dot = [&](const Image& wимg, const Image& x) {
            double acc = 0;
            if (wимg.empty() || x.empty()) return 0.0;
            for (size_t i = 0; i < x.data().size(); ++i) acc += wимg.data()[i] * x.data()[i];
            return acc;
        };
        s += dot(w_albedo, gb.albedo);
        s += dot(w_metallic, gb.metallic);
        s += dot(w_roughness, gb.roughness);
        s += dot(w_normal, gb.normal);
        s += dot(w_diffuse, gb.diffuse);
        s += dot(w_depth, gb.depth);
        s += dot(w_alpha, gb.alpha);
        return s;
    }

    GBufferGrads upstream() const {
        GBufferGrads u;
        u.albedo = w_albedo;
        u.metallic = w_metallic;
        u.roughness = w_roughness;
        u.normal = w_normal;
        u.diffuse = w_diffuse;
        u.depth = w_depth;
        u.alpha = w_alpha;
        return u;
    }
};

std::vector<double*> collect_params(Scene& s, Rng& rng, int wanted) {
    std::vector<double*> all;
    for (int i = 0; i < s.count(); ++i) {
        for (int k = 0; k < 3; ++k) all.push_back(&s.position[size_t(i)][k]);
        for (int k = 0; k < 4; ++k) all.push_back(&s.quat[size_t(i)][k]);
        all.push_back(&s.log_scale[size_t(i)].x);
        all.push_back(&s.log_scale[size_t(i)].y);
        if (s.kind == PrimitiveKind::Ellipsoid3D) all.push_back(&s.log_scale[size_t(i)].z);
        all.push_back(&s.opacity_raw[size_t(i)]);
        for (int k = 0; k < 3; ++k) all.push_back(&s.albedo_raw[size_t(i)][k]);
        all.push_back(&s.metallic_raw[size_t(i)]);
        all.push_back(&s.roughness_raw[size_t(i)]);
    }
    for (auto& v : s.diffuse_sh) all.push_back(&v);
    for (auto& v : s.indirect_sh) all.push_back(&v);
    std::vector<double*> pick;
    for (int i = 0; i < wanted; ++i) all.size() ? pick.push_back(all[size_t(rng.uniform_int(int(all.size())))]) : void();
    return pick;
}

double analytic_grad_of(Scene& s, const SceneGrads& g, const double* p) {
    auto in = [&](const void* base, size_t bytes) {
        auto* b = reinterpret_cast<const char*>(base);
        auto* q = reinterpret_cast<const char*>(p);
        return q >= b && q < b + bytes;
    };
    size_t n = size_t(s.count());
    if (!s.position.empty() && in(s.position.data(), n * sizeof(Vec3)))
        return (&g.position[0].x)[p - &s.position[0].x];
    if (!s.quat.empty() && in(s.quat.data(), n * sizeof(Quat)))
        return (&g.quat[0].w)[p - &s.quat[0].w];
    if (!s.log_scale.empty() && in(s.log_scale.data(), n * sizeof(Vec3)))
        return (&g.log_scale[0].x)[p - &s.log_scale[0].x];
    if (!s.opacity_raw.empty() && in(s.opacity_raw.data(), n * sizeof(double)))
        return g.opacity_raw[size_t(p - s.opacity_raw.data())];
    if (!s.albedo_raw.empty() && in(s.albedo_raw.data(), n * sizeof(Vec3)))
        return (&g.albedo_raw[0].x)[p - &s.albedo_raw[0].x];
    if (!s.metallic_raw.empty() && in(s.metallic_raw.data(), n * sizeof(double)))
        return g.metallic_raw[size_t(p - s.metallic_raw.data())];
    if (!s.roughness_raw.empty() && in(s.roughness_raw.data(), n * sizeof(double)))
        return g.roughness_raw[size_t(p - s.roughness_raw.data())];
    if (!s.diffuse_sh.empty() && in(s.diffuse_sh.data(), s.diffuse_sh.size() * sizeof(double)))
        return g.diffuse_sh[size_t(p - s.diffuse_sh.data())];
    if (!s.indirect_sh.empty() && in(s.indirect_sh.data(), s.indirect_sh.size() * sizeof(double)))
        return g.indirect_sh[size_t(p - s.indirect_sh.data())];
    REQUIRE(false);
    return 0;
}

}  // namespace

TEST_CASE("rasterize_backward: opaque singleton pass-through") {
    SceneInitConfig cfg;
    cfg.count = 1;
    Scene s = make_random_scene(cfg, PrimitiveKind::Splat2D);
    s.position[0] = {0, 0, 0};
    s.quat[0] = {1, 0, 0, 0};
    s.log_scale[0] = {0, 0, 0};
    s.set_opacity(0, 0.9);
    s.set_albedo(0, {0.7, 0.3, 0.5});
    Camera cam = make_lookat_camera({0, 0, 4}, {0, 0, 0}, {0, 1, 0}, kPi / 2, 1, 1);
    RenderOptions opt;
    opt.channels = kChAlbedo;
    RasterCache cache;
    GBuffer gb = rasterize(s, cam, opt, &cache);

    GBufferGrads up;
    up.albedo = Image(1, 1, 3);
    up.albedo.at(0, 0, 0) = 1.0;
    SceneGrads grads;
    grads.resize_like(s);
    rasterize_backward(s, cam, opt, cache, gb, up, grads);

    // dL/d(activated albedo.r) should be alpha * T = opacity; raw-space grad
    // divides out the sigmoid slope
    double a = s.albedo(0).x;
    double expect_raw = s.opacity(0) * a * (1.0 - a);
    CHECK(grads.albedo_raw[0].x == doctest::Approx(expect_raw).epsilon(1e-9));
    // plateau center: geometry gradients vanish
    CHECK(std::abs(grads.position[0].x) < 1e-12);
    CHECK(std::abs(grads.position[0].y) < 1e-12);
    CHECK(std::abs(grads.log_scale[0].x) < 1e-12);
    CHECK(std::abs(grads.log_scale[0].y) < 1e-12);
}

TEST_CASE("rasterize_backward: zero upstream gives zero gradients") {
    Scene s = testutil::random_scene_for_camera(20, 3);
    Camera cam = testutil::test_camera(16, 16);
    RenderOptions opt;
    RasterCache cache;
    GBuffer gb = rasterize(s, cam, opt, &cache);
    GBufferGrads up;  // all empty -> zero
    SceneGrads grads;
    grads.resize_like(s);
    rasterize_backward(s, cam, opt, cache, gb, up, grads);
    for (int i = 0; i < s.count(); ++i) {
        CHECK(grads.position[size_t(i)].norm() == 0.0);
        CHECK(grads.opacity_raw[size_t(i)] == 0.0);
    }
}

static void run_fd_check(PrimitiveKind kind, uint64_t seed, int n_params) {
    Scene s = testutil::random_scene_for_camera(20, seed, kind);
    Camera cam = testutil::test_camera(16, 16);
    RenderOptions opt;
    opt.channels = kChDeferredSet;
    GBufferLoss loss = GBufferLoss::random(16, 16, seed ^ 0x5f5f);

    RasterCache cache;
    GBuffer gb = rasterize(s, cam, opt, &cache);
    SceneGrads grads;
    grads.resize_like(s);
    rasterize_backward(s, cam, opt, cache, gb, loss.upstream(), grads);

    Rng rng(seed + 1);
    auto params = collect_params(s, rng, n_params);
    auto closure = [&] { return loss.eval(rasterize(s, cam, opt)); };
    auto fd = oracle::fd_gradient(closure, params, 1e-4);
    REQUIRE(fd.deterministic);

    int checked = 0;
    for (size_t i = 0; i < params.size(); ++i) {
        double ana = analytic_grad_of(s, grads, params[i]);
        double ref = fd.gradient[i];
        double mag = std::max(std::abs(ana), std::abs(ref));
        if (mag < 1e-6) continue;
        ++checked;
        CHECK(std::abs(ana - ref) / mag < 1e-3);
    }
    CHECK(checked > n_params / 3);
}

TEST_CASE("rasterize_backward: finite-difference oracle (2d splats)") {
    run_fd_check(PrimitiveKind::Splat2D, 2024, 80);
}

TEST_CASE("rasterize_backward: finite-difference oracle (3d ellipsoids)") {
    run_fd_check(PrimitiveKind::Ellipsoid3D, 9090, 80);
}

TEST_CASE("rasterize_backward: directional derivative consistency") {
    Scene s = testutil::random_scene_for_camera(15, 404);
    Camera cam = testutil::test_camera(12, 12);
    RenderOptions opt;
    GBufferLoss loss = GBufferLoss::random(12, 12, 0xfeed);

    RasterCache cache;
    GBuffer gb = rasterize(s, cam, opt, &cache);
    SceneGrads grads;
    grads.resize_like(s);
    rasterize_backward(s, cam, opt, cache, gb, loss.upstream(), grads);

    // random direction over every raw parameter
    Rng rng(31337);
    std::vector<double*> slots;
    for (int i = 0; i < s.count(); ++i) {
        for (int k = 0; k < 3; ++k) slots.push_back(&s.position[size_t(i)][k]);
        for (int k = 0; k < 4; ++k) slots.push_back(&s.quat[size_t(i)][k]);
        slots.push_back(&s.log_scale[size_t(i)].x);
        slots.push_back(&s.log_scale[size_t(i)].y);
        slots.push_back(&s.opacity_raw[size_t(i)]);
        for (int k = 0; k < 3; ++k) slots.push_back(&s.albedo_raw[size_t(i)][k]);
        slots.push_back(&s.metallic_raw[size_t(i)]);
        slots.push_back(&s.roughness_raw[size_t(i)]);
    }
    std::vector<double> delta(slots.size());
    for (auto& d : delta) d = rng.uniform(-1, 1);

    SceneGrads g = grads;
    double dot = 0;
    // assemble <grad, delta> via the same slot mapping
    for (size_t k = 0; k < slots.size(); ++k) dot += analytic_grad_of(s, g, slots[k]) * delta[k];

    const double h = 1e-5;
    std::vector<double> saved(slots.size());
    for (size_t k = 0; k < slots.size(); ++k) saved[k] = *slots[k];
    for (size_t k = 0; k < slots.size(); ++k) *slots[k] = saved[k] + h * delta[k];
    double up = loss.eval(rasterize(s, cam, opt));
    for (size_t k = 0; k < slots.size(); ++k) *slots[k] = saved[k] - h * delta[k];
    double down = loss.eval(rasterize(s, cam, opt));
    for (size_t k = 0; k < slots.size(); ++k) *slots[k] = saved[k];
    double fd = (up - down) / (2 * h);
    CHECK(std::abs(dot - fd) / std::max(1.0, std::abs(fd)) < 1e-3);
}
