#include "refsplat/oracle/naive_blend.hpp"

#include <algorithm>

#include "refsplat/sh.hpp"

namespace refsplat::oracle {

namespace {

struct SplatMatrix {
    // pixel-homogeneous transform M = P * W * H mapping (u, v, 1, 1) to
    // (x z, y z, z, 1)
    double m[4][4];
    double center_z;
    bool culled;
};

SplatMatrix build_matrix(const Scene& scene, const Camera& cam, int i, double near_plane) {
    SplatMatrix out{};
    Gaussian2D g = scene.gaussian2d(i);
    out.center_z = cam.depth_of(g.position);
    out.culled = out.center_z <= near_plane;

    // W H: splat coords -> camera coords
    double WH[4][4];
    Vec3 cu = cam.R.mul(g.tangent_u * g.scale_u);
    Vec3 cv = cam.R.mul(g.tangent_v * g.scale_v);
    Vec3 cp = cam.world_to_cam(g.position);
    for (int r = 0; r < 3; ++r) {
        WH[r][0] = cu[r];
        WH[r][1] = cv[r];
        WH[r][2] = 0.0;
        WH[r][3] = cp[r];
    }
    WH[3][0] = WH[3][1] = WH[3][2] = 0.0;
    WH[3][3] = 1.0;

    // P: camera coords -> pixel-homogeneous
    double P[4][4] = {{cam.fx, 0, cam.cx, 0},
                      {0, cam.fy, cam.cy, 0},
                      {0, 0, 1, 0},
                      {0, 0, 0, 1}};
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) {
            double s = 0;
            for (int k = 0; k < 4; ++k) s += P[r][k] * WH[k][c];
            out.m[r][c] = s;
        }
    return out;
}

struct NaiveFrag {
    int index;
    double center_z;
    double u, v, z, weight, alpha;
};

}  // namespace

GBuffer naive_rasterize(const Scene& scene, const Camera& cam, const RenderOptions& opt) {
    if (scene.kind != PrimitiveKind::Splat2D)
        throw DataError("naive_rasterize covers 2D splat scenes");
    int n = scene.count();
    std::vector<SplatMatrix> mats(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) mats[size_t(i)] = build_matrix(scene, cam, i, opt.near_plane);

    GBuffer gb;
    gb.width = cam.width;
    gb.height = cam.height;
    gb.channels = opt.channels;
    gb.alpha = Image(cam.width, cam.height, 1);
    if (opt.channels & kChAlbedo) gb.albedo = Image(cam.width, cam.height, 3);
    if (opt.channels & kChMetallic) gb.metallic = Image(cam.width, cam.height, 1);
    if (opt.channels & kChRoughness) gb.roughness = Image(cam.width, cam.height, 1);
    if (opt.channels & kChNormal) gb.normal = Image(cam.width, cam.height, 3);
    if (opt.channels & kChDiffuse) gb.diffuse = Image(cam.width, cam.height, 3);
    if (opt.channels & kChRadiance) gb.radiance = Image(cam.width, cam.height, 3);
    if (opt.channels & kChDepth) gb.depth = Image(cam.width, cam.height, 1);

    Vec3 cam_pos = cam.position();
    std::vector<NaiveFrag> frags;
    for (int py = 0; py < cam.height; ++py) {
        for (int px = 0; px < cam.width; ++px) {
            double x = px + 0.5, y = py + 0.5;
            frags.clear();
            for (int i = 0; i < n; ++i) {
                const SplatMatrix& M = mats[size_t(i)];
                if (M.culled) continue;
                // planes h_x = (1, 0, -x, 0), h_y = (0, 1, -y, 0) pulled back
                double hu[4], hv[4];
                for (int c = 0; c < 4; ++c) {
                    hu[c] = M.m[0][c] - x * M.m[2][c];
                    hv[c] = M.m[1][c] - y * M.m[2][c];
                }
                double a = hu[0], b = hu[1], e = hu[2] + hu[3];
                double c2 = hv[0], d = hv[1], f = hv[2] + hv[3];
                double det = a * d - b * c2;
                if (std::abs(det) < 1e-12) continue;
                double u = (-e * d + b * f) / det;
                double v = (-a * f + e * c2) / det;
                double r2 = u * u + v * v;
                if (r2 > opt.sigma_cutoff * opt.sigma_cutoff) continue;
                double w = std::exp(-0.5 * r2);
                if (w < opt.weight_cutoff) continue;
                double z = M.m[2][0] * u + M.m[2][1] * v + M.m[2][2] + M.m[2][3];
                if (z <= opt.near_plane) continue;
                NaiveFrag fr;
                fr.index = i;
                fr.center_z = M.center_z;
                fr.u = u;
                fr.v = v;
                fr.z = z;
                fr.weight = w;
                fr.alpha = scene.opacity(i) * w;
                frags.push_back(fr);
            }
            std::sort(frags.begin(), frags.end(), [](const NaiveFrag& a, const NaiveFrag& b) {
                return a.center_z < b.center_z ||
                       (a.center_z == b.center_z && a.index < b.index);
            });

            double T = 1.0;
            Vec3 alb{0, 0, 0}, nrm{0, 0, 0}, dif{0, 0, 0}, rad{0, 0, 0};
            double met = 0, rgh = 0, A = 0, Z = 0;
            for (const NaiveFrag& fr : frags) {
                double at = fr.alpha * T;
                int i = fr.index;
                if (opt.channels & kChAlbedo) alb += scene.albedo(i) * at;
                if (opt.channels & kChMetallic) met += scene.metallic(i) * at;
                if (opt.channels & kChRoughness) rgh += scene.roughness(i) * at;
                if (opt.channels & kChNormal) {
                    Gaussian2D g = scene.gaussian2d(i);
                    nrm += gaussian_normal(g, cam_pos) * at;
                }
                if (opt.channels & kChDiffuse) {
                    Vec3 dir = (scene.position[i] - cam_pos).normalized();
                    dif += eval_sh(scene.diffuse_sh_degree, scene.diffuse_coeffs(i), dir) * at;
                }
                if ((opt.channels & kChRadiance) && opt.radiance) rad += opt.radiance[i] * at;
                if (opt.channels & kChDepth) Z += fr.z * at;
                A += at;
                T *= (1.0 - fr.alpha);
                if (T < opt.min_transmittance) break;
            }
            gb.alpha.at(px, py) = A;
            if (opt.channels & kChAlbedo) gb.albedo.set_rgb(px, py, alb);
            if (opt.channels & kChMetallic) gb.metallic.at(px, py) = met;
            if (opt.channels & kChRoughness) gb.roughness.at(px, py) = rgh;
            if (opt.channels & kChNormal) gb.normal.set_rgb(px, py, nrm);
            if (opt.channels & kChDiffuse) gb.diffuse.set_rgb(px, py, dif);
            if (opt.channels & kChRadiance) gb.radiance.set_rgb(px, py, rad);
            if (opt.channels & kChDepth) gb.depth.at(px, py) = A > 0 ? Z / A : 0.0;
        }
    }
    return gb;
}

}  // namespace refsplat::oracle
