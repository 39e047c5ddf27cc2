#include "refsplat/scene.hpp"

#include <algorithm>

namespace refsplat {

void Scene::resize(int n) {
    position.resize(size_t(n));
    quat.resize(size_t(n), Quat{1, 0, 0, 0});
    log_scale.resize(size_t(n));
    opacity_raw.resize(size_t(n));
    albedo_raw.resize(size_t(n));
    metallic_raw.resize(size_t(n));
    roughness_raw.resize(size_t(n));
    diffuse_sh.resize(size_t(n) * 3 * nc_diffuse(), 0.0);
    indirect_sh.resize(size_t(n) * 3 * nc_indirect(), 0.0);
}

Gaussian2D Scene::gaussian2d(int i) const {
    Gaussian2D g;
    g.position = position[i];
    Mat3 R = quat[i].to_matrix();
    g.tangent_u = R.col(0);
    g.tangent_v = R.col(1);
    Vec3 s = scales(i);
    g.scale_u = s.x;
    g.scale_v = s.y;
    g.opacity = opacity(i);
    g.albedo = albedo(i);
    g.metallic = metallic(i);
    g.roughness = roughness(i);
    g.diffuse_sh = SHBlock(diffuse_sh_degree);
    g.indirect_sh = SHBlock(indirect_sh_degree);
    const double* dc = diffuse_coeffs(i);
    for (int k = 0; k < nc_diffuse(); ++k)
        g.diffuse_sh.coeffs[k] = {dc[3 * k], dc[3 * k + 1], dc[3 * k + 2]};
    const double* ic = indirect_coeffs(i);
    for (int k = 0; k < nc_indirect(); ++k)
        g.indirect_sh.coeffs[k] = {ic[3 * k], ic[3 * k + 1], ic[3 * k + 2]};
    return g;
}

Gaussian3D Scene::gaussian3d(int i) const {
    Gaussian3D g;
    g.position = position[i];
    g.rotation = quat[i].normalized();
    g.scale = scales(i);
    g.opacity = opacity(i);
    g.albedo = albedo(i);
    g.metallic = metallic(i);
    g.roughness = roughness(i);
    g.diffuse_sh = SHBlock(diffuse_sh_degree);
    g.indirect_sh = SHBlock(indirect_sh_degree);
    const double* dc = diffuse_coeffs(i);
    for (int k = 0; k < nc_diffuse(); ++k)
        g.diffuse_sh.coeffs[k] = {dc[3 * k], dc[3 * k + 1], dc[3 * k + 2]};
    const double* ic = indirect_coeffs(i);
    for (int k = 0; k < nc_indirect(); ++k)
        g.indirect_sh.coeffs[k] = {ic[3 * k], ic[3 * k + 1], ic[3 * k + 2]};
    return g;
}

void Scene::normalize_frames() {
    for (auto& q : quat) q = q.normalized();
}

std::string Scene::validate() const {
    for (int i = 0; i < count(); ++i) {
        if (!position[i].finite()) return "non-finite position at " + std::to_string(i);
        Mat3 R = quat[i].to_matrix();
        Vec3 tu = R.col(0), tv = R.col(1);
        if (std::abs(tu.norm() - 1.0) > 1e-6 || std::abs(tv.norm() - 1.0) > 1e-6 ||
            std::abs(tu.dot(tv)) > 1e-6)
            return "tangent frame not orthonormal at " + std::to_string(i);
        Vec3 s = scales(i);
        if (!(s.x > 0.0) || !(s.y > 0.0)) return "non-positive scale at " + std::to_string(i);
        double o = opacity(i), m = metallic(i), r = roughness(i);
        Vec3 a = albedo(i);
        if (o < 0 || o > 1 || m < 0 || m > 1 || r < 0 || r > 1)
            return "attribute out of range at " + std::to_string(i);
        if (a.x < 0 || a.x > 1 || a.y < 0 || a.y > 1 || a.z < 0 || a.z > 1)
            return "albedo out of range at " + std::to_string(i);
    }
    for (double v : diffuse_sh)
        if (!std::isfinite(v)) return "non-finite diffuse sh";
    for (double v : indirect_sh)
        if (!std::isfinite(v)) return "non-finite indirect sh";
    return {};
}

AABB Scene::bounding_box() const {
    AABB box;
    for (const auto& p : position) box.grow(p);
    return box;
}

void Scene::erase(const std::vector<int>& sorted_indices) {
    if (sorted_indices.empty()) return;
    int n = count();
    std::vector<char> dead(size_t(n), 0);
    for (int i : sorted_indices) dead[size_t(i)] = 1;
    int ncd = nc_diffuse() * 3, nci = nc_indirect() * 3;
    int w = 0;
    for (int i = 0; i < n; ++i) {
        if (dead[size_t(i)]) continue;
        if (w != i) {
            position[w] = position[i];
            quat[w] = quat[i];
            log_scale[w] = log_scale[i];
            opacity_raw[w] = opacity_raw[i];
            albedo_raw[w] = albedo_raw[i];
            metallic_raw[w] = metallic_raw[i];
            roughness_raw[w] = roughness_raw[i];
            std::copy_n(&diffuse_sh[size_t(i) * ncd], ncd, &diffuse_sh[size_t(w) * ncd]);
            std::copy_n(&indirect_sh[size_t(i) * nci], nci, &indirect_sh[size_t(w) * nci]);
        }
        ++w;
    }
    position.resize(size_t(w));
    quat.resize(size_t(w));
    log_scale.resize(size_t(w));
    opacity_raw.resize(size_t(w));
    albedo_raw.resize(size_t(w));
    metallic_raw.resize(size_t(w));
    roughness_raw.resize(size_t(w));
    diffuse_sh.resize(size_t(w) * ncd);
    indirect_sh.resize(size_t(w) * nci);
}

int Scene::append_copy(int src) {
    int idx = count();
    position.push_back(position[src]);
    quat.push_back(quat[src]);
    log_scale.push_back(log_scale[src]);
    opacity_raw.push_back(opacity_raw[src]);
    albedo_raw.push_back(albedo_raw[src]);
    metallic_raw.push_back(metallic_raw[src]);
    roughness_raw.push_back(roughness_raw[src]);
    int ncd = nc_diffuse() * 3, nci = nc_indirect() * 3;
    diffuse_sh.insert(diffuse_sh.end(), diffuse_sh.begin() + size_t(src) * ncd,
                      diffuse_sh.begin() + size_t(src + 1) * ncd);
    indirect_sh.insert(indirect_sh.end(), indirect_sh.begin() + size_t(src) * nci,
                       indirect_sh.begin() + size_t(src + 1) * nci);
    return idx;
}

void SceneGrads::resize_like(const Scene& s) {
    size_t n = size_t(s.count());
    position.assign(n, Vec3{});
    quat.assign(n, Quat{0, 0, 0, 0});
    log_scale.assign(n, Vec3{});
    opacity_raw.assign(n, 0.0);
    albedo_raw.assign(n, Vec3{});
    metallic_raw.assign(n, 0.0);
    roughness_raw.assign(n, 0.0);
    diffuse_sh.assign(n * 3 * size_t(s.nc_diffuse()), 0.0);
    indirect_sh.assign(n * 3 * size_t(s.nc_indirect()), 0.0);
}

void SceneGrads::clear() {
    std::fill(position.begin(), position.end(), Vec3{});
    std::fill(quat.begin(), quat.end(), Quat{0, 0, 0, 0});
    std::fill(log_scale.begin(), log_scale.end(), Vec3{});
    std::fill(opacity_raw.begin(), opacity_raw.end(), 0.0);
    std::fill(albedo_raw.begin(), albedo_raw.end(), Vec3{});
    std::fill(metallic_raw.begin(), metallic_raw.end(), 0.0);
    std::fill(roughness_raw.begin(), roughness_raw.end(), 0.0);
    std::fill(diffuse_sh.begin(), diffuse_sh.end(), 0.0);
    std::fill(indirect_sh.begin(), indirect_sh.end(), 0.0);
}

void SceneGrads::add(const SceneGrads& o) {
    for (size_t i = 0; i < position.size(); ++i) {
        position[i] += o.position[i];
        for (int k = 0; k < 4; ++k) quat[i][k] += o.quat[i][k];
        log_scale[i] += o.log_scale[i];
        opacity_raw[i] += o.opacity_raw[i];
        albedo_raw[i] += o.albedo_raw[i];
        metallic_raw[i] += o.metallic_raw[i];
        roughness_raw[i] += o.roughness_raw[i];
    }
    for (size_t i = 0; i < diffuse_sh.size(); ++i) diffuse_sh[i] += o.diffuse_sh[i];
    for (size_t i = 0; i < indirect_sh.size(); ++i) indirect_sh[i] += o.indirect_sh[i];
}

namespace {

void init_attributes(Scene& s, int i, const SceneInitConfig& cfg) {
    s.set_opacity(i, cfg.opacity);
    s.set_albedo(i, cfg.albedo);
    s.set_metallic(i, std::max(cfg.metallic, 1e-6));
    s.set_roughness(i, cfg.roughness);
    int ncd = s.nc_diffuse();
    double* dc = &s.diffuse_sh[size_t(i) * 3 * ncd];
    std::fill_n(dc, 3 * ncd, 0.0);
    // degree-0 coefficient reproducing a constant gray
    double c0 = cfg.diffuse_gray / 0.28209479177387814;
    dc[0] = dc[1] = dc[2] = c0;
    std::fill_n(&s.indirect_sh[size_t(i) * 3 * s.nc_indirect()], 3 * s.nc_indirect(), 0.0);
}

}  // namespace

Scene make_random_scene(const SceneInitConfig& cfg, PrimitiveKind kind) {
    Scene s;
    s.kind = kind;
    s.resize(cfg.count);
    Rng rng(cfg.seed);
    for (int i = 0; i < cfg.count; ++i) {
        // uniform in a ball via rejection
        Vec3 p;
        do {
            p = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
        } while (p.norm2() > 1.0);
        s.position[i] = cfg.center + p * cfg.radius;
        Vec3 axis = rng.uniform_sphere();
        s.quat[i] = Quat::from_axis_angle(axis, rng.uniform(0, kTwoPi));
        init_attributes(s, i, cfg);
    }
    // scale from mean spacing of a uniform ball sample
    double spacing = cfg.radius * std::cbrt(1.0 / std::max(1, cfg.count)) * 2.0;
    for (int i = 0; i < cfg.count; ++i)
        s.log_scale[i] = Vec3::all(std::log(std::max(spacing, 1e-6)));
    return s;
}

void reset_materials(Scene& scene, const SceneInitConfig& defaults) {
    for (int i = 0; i < scene.count(); ++i) init_attributes(scene, i, defaults);
}

}  // namespace refsplat
