#include "refsplat/raster.hpp"

#include <algorithm>
#include <cmath>

#include "refsplat/sh.hpp"

namespace refsplat {

namespace {

struct PixelRay {
    Vec3 origin;
    Vec3 dir;      // unit, world space
    double rd_z;   // camera-forward component of dir
};

PixelRay make_ray(const Camera& cam, Vec3 origin, int px, int py) {
    PixelRay r;
    r.origin = origin;
    r.dir = cam.ray_dir(px + 0.5, py + 0.5);
    r.rd_z = cam.R.row(2).dot(r.dir);
    return r;
}

struct Frag2D {
    double u, v, t, z, w;
    double denom;
    Vec3 m;  // hit point minus splat center
};

struct Frag3D {
    double dx, dy, w;  // pixel offset from the projected mean
};

// Ray-splat intersection with the shared admission rule. Returns false on a
// miss (parallel plane, behind the near plane, outside the sigma cutoff, or
// weight below the cutoff).
inline bool intersect_2d(const Prepared2D& g, const PixelRay& ray, const RenderOptions& opt,
                         Frag2D& f) {
    double denom = ray.dir.dot(g.n);
    if (std::abs(denom) < 1e-12) return false;
    double t = (g.pos - ray.origin).dot(g.n) / denom;
    double z = t * ray.rd_z;
    if (z <= opt.near_plane) return false;
    Vec3 m = ray.origin + ray.dir * t - g.pos;
    double u = m.dot(g.tu) / g.su;
    double v = m.dot(g.tv) / g.sv;
    double r2 = u * u + v * v;
    if (r2 > opt.sigma_cutoff * opt.sigma_cutoff) return false;
    double w = std::exp(-0.5 * r2);
    if (w < opt.weight_cutoff) return false;
    f = {u, v, t, z, w, denom, m};
    return true;
}

inline bool intersect_3d(const Prepared3D& g, double px, double py, const RenderOptions& opt,
                         Frag3D& f) {
    double dx = px + 0.5 - g.mean_px.x;
    double dy = py + 0.5 - g.mean_px.y;
    double q = g.cinv_a * dx * dx + 2.0 * g.cinv_b * dx * dy + g.cinv_c * dy * dy;
    if (q > opt.sigma_cutoff * opt.sigma_cutoff) return false;
    double w = std::exp(-0.5 * q);
    if (w < opt.weight_cutoff) return false;
    f = {dx, dy, w};
    return true;
}

// Front-to-back traversal over a pixel's candidate list. The visitor sees the
// transmittance before the fragment; the walker owns alpha composition and
// early termination so every pass replays the identical fragment sequence.
template <class Visit>
inline void walk_pixel_2d(const std::vector<Prepared2D>& prep,
                          const std::vector<int32_t>& list, const PixelRay& ray,
                          const RenderOptions& opt, Visit&& visit) {
    double T = 1.0;
    for (int32_t gi : list) {
        const Prepared2D& g = prep[size_t(gi)];
        Frag2D f;
        if (!intersect_2d(g, ray, opt, f)) continue;
        double alpha = g.opacity * f.w;
        visit(gi, g, f, alpha, T);
        T *= (1.0 - alpha);
        if (T < opt.min_transmittance) break;
    }
}

template <class Visit>
inline void walk_pixel_3d(const std::vector<Prepared3D>& prep,
                          const std::vector<int32_t>& list, int px, int py,
                          const RenderOptions& opt, Visit&& visit) {
    double T = 1.0;
    for (int32_t gi : list) {
        const Prepared3D& g = prep[size_t(gi)];
        Frag3D f;
        if (!intersect_3d(g, px, py, opt, f)) continue;
        double alpha = g.opacity * f.w;
        visit(gi, g, f, alpha, T);
        T *= (1.0 - alpha);
        if (T < opt.min_transmittance) break;
    }
}

// Conservative pixel radius of a bounding sphere seen from the camera.
// Returns a negative value when the whole image must be assumed covered.
double sphere_screen_radius(const Camera& cam, Vec3 center_world, double r) {
    Vec3 c = center_world - (cam.R.tmul(cam.t) * -1.0);
    double dist = c.norm();
    if (dist <= r * 1.0001) return -1.0;
    double sin_theta = r / dist;
    double theta = std::asin(std::min(1.0, sin_theta));
    // pixels-per-radian upper bound over the image
    double rx = std::max(cam.cx, cam.width - cam.cx);
    double ry = std::max(cam.cy, cam.height - cam.cy);
    double corner = std::sqrt(rx * rx + ry * ry);
    double fmin = std::min(cam.fx, cam.fy);
    double sec2 = 1.0 + (corner / fmin) * (corner / fmin);
    return std::max(cam.fx, cam.fy) * sec2 * theta + 2.0;
}

void assign_tiles(RasterCache& cache, const Camera& cam, int gi, Vec2 center_px,
                  double radius_px) {
    int ts = cache.tile_size;
    int tx0 = 0, tx1 = cache.tiles_x - 1, ty0 = 0, ty1 = cache.tiles_y - 1;
    if (radius_px >= 0.0) {
        tx0 = std::max(0, int(std::floor((center_px.x - radius_px) / ts)));
        tx1 = std::min(cache.tiles_x - 1, int(std::floor((center_px.x + radius_px) / ts)));
        ty0 = std::max(0, int(std::floor((center_px.y - radius_px) / ts)));
        ty1 = std::min(cache.tiles_y - 1, int(std::floor((center_px.y + radius_px) / ts)));
        if (tx0 > tx1 || ty0 > ty1) return;
    }
    for (int ty = ty0; ty <= ty1; ++ty)
        for (int tx = tx0; tx <= tx1; ++tx)
            cache.tile_lists[size_t(ty) * cache.tiles_x + tx].push_back(gi);
}

void prepare(const Scene& scene, const Camera& cam, const RenderOptions& opt,
             RasterCache& cache) {
    int n = scene.count();
    cache.tile_size = opt.tile_size;
    cache.tiles_x = (cam.width + opt.tile_size - 1) / opt.tile_size;
    cache.tiles_y = (cam.height + opt.tile_size - 1) / opt.tile_size;
    cache.tile_lists.assign(size_t(cache.tiles_x) * cache.tiles_y, {});
    cache.culled.assign(size_t(n), 0);
    Vec3 cam_pos = cam.position();

    if (scene.kind == PrimitiveKind::Splat2D) {
        cache.prep2d.resize(size_t(n));
        cache.prep3d.clear();
        for (int i = 0; i < n; ++i) {
            Prepared2D& p = cache.prep2d[size_t(i)];
            p.pos = scene.position[i];
            p.center_z = cam.depth_of(p.pos);
            if (p.center_z <= opt.near_plane) {
                cache.culled[size_t(i)] = 1;
                continue;
            }
            Mat3 R = scene.quat[i].to_matrix();
            p.tu = R.col(0);
            p.tv = R.col(1);
            p.n = R.col(2);
            Vec3 to_cam = cam_pos - p.pos;
            p.sign = p.n.dot(to_cam) >= 0.0 ? 1.0 : -1.0;
            Vec3 s = scene.scales(i);
            p.su = s.x;
            p.sv = s.y;
            p.opacity = scene.opacity(i);
            p.albedo = scene.albedo(i);
            p.metallic = scene.metallic(i);
            p.roughness = scene.roughness(i);
            p.view_dist = std::max(to_cam.norm(), 1e-9);
            p.view_dir = (p.pos - cam_pos) / p.view_dist;
            p.diffuse_rgb = (opt.channels & kChDiffuse)
                                ? eval_sh(scene.diffuse_sh_degree, scene.diffuse_coeffs(i),
                                          p.view_dir)
                                : Vec3{0, 0, 0};

            double r3 = opt.sigma_cutoff * std::max(p.su, p.sv);
            Vec2 px;
            double z;
            cam.project(p.pos, px, z);
            assign_tiles(cache, cam, i, px, sphere_screen_radius(cam, p.pos, r3));
        }
    } else {
        cache.prep3d.resize(size_t(n));
        cache.prep2d.clear();
        for (int i = 0; i < n; ++i) {
            Prepared3D& p = cache.prep3d[size_t(i)];
            p.pos = scene.position[i];
            p.center_z = cam.depth_of(p.pos);
            if (p.center_z <= opt.near_plane) {
                cache.culled[size_t(i)] = 1;
                continue;
            }
            Gaussian3D g = scene.gaussian3d(i);
            bool culled = false;
            Mat2 cov = project_covariance_3d(g, cam, &culled, opt.near_plane);
            double det = cov.det();
            if (culled || det <= 1e-18) {
                cache.culled[size_t(i)] = 1;
                continue;
            }
            Mat2 cinv = cov.inverse();
            p.cinv_a = cinv.m[0][0];
            p.cinv_b = 0.5 * (cinv.m[0][1] + cinv.m[1][0]);
            p.cinv_c = cinv.m[1][1];
            Vec2 px;
            double z;
            cam.project(p.pos, px, z);
            p.mean_px = px;
            Vec3 s = scene.scales(i);
            p.min_axis = (s.x <= s.y && s.x <= s.z) ? 0 : (s.y <= s.z ? 1 : 2);
            Mat3 R = scene.quat[i].to_matrix();
            Vec3 nrm = R.col(p.min_axis);
            Vec3 to_cam = cam_pos - p.pos;
            p.sign = nrm.dot(to_cam) >= 0.0 ? 1.0 : -1.0;
            p.normal = nrm * p.sign;
            p.opacity = scene.opacity(i);
            p.albedo = scene.albedo(i);
            p.metallic = scene.metallic(i);
            p.roughness = scene.roughness(i);
            p.view_dist = std::max(to_cam.norm(), 1e-9);
            p.view_dir = (p.pos - cam_pos) / p.view_dist;
            p.diffuse_rgb = (opt.channels & kChDiffuse)
                                ? eval_sh(scene.diffuse_sh_degree, scene.diffuse_coeffs(i),
                                          p.view_dir)
                                : Vec3{0, 0, 0};

            double tr = cov.m[0][0] + cov.m[1][1];
            double disc = std::sqrt(std::max(0.0, 0.25 * tr * tr - det));
            double lmax = 0.5 * tr + disc;
            double radius_px = opt.sigma_cutoff * std::sqrt(std::max(lmax, 0.0)) + 1.0;
            assign_tiles(cache, cam, i, px, radius_px);
        }
    }

    // remove culled candidates and fix the traversal order
    auto center_z = [&](int32_t gi) {
        return scene.kind == PrimitiveKind::Splat2D ? cache.prep2d[size_t(gi)].center_z
                                                    : cache.prep3d[size_t(gi)].center_z;
    };
    for (auto& list : cache.tile_lists) {
        list.erase(std::remove_if(list.begin(), list.end(),
                                  [&](int32_t gi) { return cache.culled[size_t(gi)]; }),
                   list.end());
        std::sort(list.begin(), list.end(), [&](int32_t a, int32_t b) {
            double za = center_z(a), zb = center_z(b);
            return za < zb || (za == zb && a < b);
        });
    }
}

}  // namespace

bool ray_splat_intersect(const Gaussian2D& g, const Camera& cam, double px, double py,
                         SplatHit& hit, double near_plane, double sigma_cutoff,
                         double weight_cutoff) {
    Prepared2D p;
    p.pos = g.position;
    p.tu = g.tangent_u;
    p.tv = g.tangent_v;
    p.n = g.tangent_u.cross(g.tangent_v).normalized();
    p.su = g.scale_u;
    p.sv = g.scale_v;
    RenderOptions opt;
    opt.near_plane = near_plane;
    opt.sigma_cutoff = sigma_cutoff;
    opt.weight_cutoff = weight_cutoff;
    PixelRay ray;
    ray.origin = cam.position();
    ray.dir = cam.ray_dir(px, py);
    ray.rd_z = cam.R.row(2).dot(ray.dir);
    Frag2D f;
    if (!intersect_2d(p, ray, opt, f)) return false;
    hit = {f.u, f.v, f.z, f.w};
    return true;
}

GBuffer rasterize(const Scene& scene, const Camera& cam, const RenderOptions& opt,
                  RasterCache* cache_out) {
    if (cam.width <= 0 || cam.height <= 0) throw DataError("rasterize: empty camera viewport");
    if ((opt.channels & kChRadiance) && opt.radiance == nullptr)
        throw DataError("rasterize: radiance channel selected without per-gaussian radiance");

    RasterCache local;
    RasterCache& cache = cache_out ? *cache_out : local;
    prepare(scene, cam, opt, cache);

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

    Vec3 origin = cam.position();
    int n_tiles = cache.tiles_x * cache.tiles_y;
    bool mode2d = scene.kind == PrimitiveKind::Splat2D;

    parallel_for(n_tiles, opt.threads, [&](int64_t t0, int64_t t1, int) {
        for (int64_t ti = t0; ti < t1; ++ti) {
            const auto& list = cache.tile_lists[size_t(ti)];
            if (list.empty()) continue;
            int tx = int(ti % cache.tiles_x), ty = int(ti / cache.tiles_x);
            int x0 = tx * cache.tile_size, y0 = ty * cache.tile_size;
            int x1 = std::min(x0 + cache.tile_size, cam.width);
            int y1 = std::min(y0 + cache.tile_size, cam.height);
            for (int py = y0; py < y1; ++py) {
                for (int px = x0; px < x1; ++px) {
                    double acc[14] = {0};  // albedo3 m r normal3 diffuse3 radiance? reuse
                    double accA = 0, accZ = 0;
                    Vec3 accRad{0, 0, 0};
                    if (mode2d) {
                        PixelRay ray = make_ray(cam, origin, px, py);
                        walk_pixel_2d(cache.prep2d, list, ray, opt,
                                      [&](int32_t gi, const Prepared2D& g, const Frag2D& f,
                                          double alpha, double T) {
                                          double at = alpha * T;
                                          if (opt.channels & kChAlbedo) {
                                              acc[0] += g.albedo.x * at;
                                              acc[1] += g.albedo.y * at;
                                              acc[2] += g.albedo.z * at;
                                          }
                                          if (opt.channels & kChMetallic) acc[3] += g.metallic * at;
                                          if (opt.channels & kChRoughness) acc[4] += g.roughness * at;
                                          if (opt.channels & kChNormal) {
                                              acc[5] += g.sign * g.n.x * at;
                                              acc[6] += g.sign * g.n.y * at;
                                              acc[7] += g.sign * g.n.z * at;
                                          }
                                          if (opt.channels & kChDiffuse) {
                                              acc[8] += g.diffuse_rgb.x * at;
                                              acc[9] += g.diffuse_rgb.y * at;
                                              acc[10] += g.diffuse_rgb.z * at;
                                          }
                                          if (opt.channels & kChRadiance)
                                              accRad += opt.radiance[gi] * at;
                                          if (opt.channels & kChDepth) accZ += f.z * at;
                                          accA += at;
                                      });
                    } else {
                        walk_pixel_3d(cache.prep3d, list, px, py, opt,
                                      [&](int32_t gi, const Prepared3D& g, const Frag3D&,
                                          double alpha, double T) {
                                          double at = alpha * T;
                                          if (opt.channels & kChAlbedo) {
                                              acc[0] += g.albedo.x * at;
                                              acc[1] += g.albedo.y * at;
                                              acc[2] += g.albedo.z * at;
                                          }
                                          if (opt.channels & kChMetallic) acc[3] += g.metallic * at;
                                          if (opt.channels & kChRoughness) acc[4] += g.roughness * at;
                                          if (opt.channels & kChNormal) {
                                              acc[5] += g.normal.x * at;
                                              acc[6] += g.normal.y * at;
                                              acc[7] += g.normal.z * at;
                                          }
                                          if (opt.channels & kChDiffuse) {
                                              acc[8] += g.diffuse_rgb.x * at;
                                              acc[9] += g.diffuse_rgb.y * at;
                                              acc[10] += g.diffuse_rgb.z * at;
                                          }
                                          if (opt.channels & kChRadiance)
                                              accRad += opt.radiance[gi] * at;
                                          if (opt.channels & kChDepth) accZ += g.center_z * at;
                                          accA += at;
                                      });
                    }
                    gb.alpha.at(px, py) = accA;
                    if (opt.channels & kChAlbedo) gb.albedo.set_rgb(px, py, {acc[0], acc[1], acc[2]});
                    if (opt.channels & kChMetallic) gb.metallic.at(px, py) = acc[3];
                    if (opt.channels & kChRoughness) gb.roughness.at(px, py) = acc[4];
                    if (opt.channels & kChNormal) gb.normal.set_rgb(px, py, {acc[5], acc[6], acc[7]});
                    if (opt.channels & kChDiffuse) gb.diffuse.set_rgb(px, py, {acc[8], acc[9], acc[10]});
                    if (opt.channels & kChRadiance) gb.radiance.set_rgb(px, py, accRad);
                    if (opt.channels & kChDepth)
                        gb.depth.at(px, py) = accA > 0.0 ? accZ / accA : 0.0;
                }
            }
        }
    });
    return gb;
}

namespace {

// per-thread scatter buffers for the backward pass
struct BackwardScratch {
    SceneGrads grads;
    std::vector<Vec3> dtu, dtv, dn;       // 2D frame gradients
    std::vector<Vec3> ddiffdir;           // diffuse-channel view-direction grads
    std::vector<Vec3> dradiance;          // upstream radiance grads per gaussian
    std::vector<Vec2> dmean;              // 3D: projected-mean grads
    std::vector<double> dca, dcb, dcc;    // 3D: inverse-covariance grads (sym)
    std::vector<double> dzc;              // 3D: center-depth grads

    void init(const Scene& scene, bool mode2d, bool want_radiance) {
        grads.resize_like(scene);
        size_t n = size_t(scene.count());
        dn.assign(n, Vec3{});
        ddiffdir.assign(n, Vec3{});
        if (mode2d) {
            dtu.assign(n, Vec3{});
            dtv.assign(n, Vec3{});
        } else {
            dmean.assign(n, Vec2{});
            dca.assign(n, 0.0);
            dcb.assign(n, 0.0);
            dcc.assign(n, 0.0);
            dzc.assign(n, 0.0);
        }
        if (want_radiance) dradiance.assign(n, Vec3{});
    }

    void merge(const BackwardScratch& o) {
        grads.add(o.grads);
        for (size_t u = 0; u < dn.size(); ++u) {
            dn[u] += o.dn[u];
            ddiffdir[u] += o.ddiffdir[u];
        }
        for (size_t u = 0; u < dtu.size(); ++u) {
            dtu[u] += o.dtu[u];
            dtv[u] += o.dtv[u];
        }
        for (size_t u = 0; u < dmean.size(); ++u) {
            dmean[u] += o.dmean[u];
            dca[u] += o.dca[u];
            dcb[u] += o.dcb[u];
            dcc[u] += o.dcc[u];
            dzc[u] += o.dzc[u];
        }
        for (size_t u = 0; u < dradiance.size(); ++u) dradiance[u] += o.dradiance[u];
    }
};

inline Vec3 fetch3(const Image& img, int x, int y) {
    return img.empty() ? Vec3{0, 0, 0} : img.rgb(x, y);
}
inline double fetch1(const Image& img, int x, int y) {
    return img.empty() ? 0.0 : img.at(x, y);
}

// alpha -> (opacity, weight) -> intersection geometry, for one 2D fragment
inline void frag_geo_backward_2d(const Prepared2D& g, size_t u, const PixelRay& ray,
                                 const Frag2D& f, double dalpha, double dz_frag,
                                 BackwardScratch& sc) {
    sc.grads.opacity_raw[u] += dalpha * f.w * g.opacity * (1 - g.opacity);
    double dw = dalpha * g.opacity;
    double du = -f.u * f.w * dw;
    double dv = -f.v * f.w * dw;
    double dt = dz_frag * ray.rd_z;

    Vec3 dm = g.tu * (du / g.su) + g.tv * (dv / g.sv);
    double dt_total = dt + dm.dot(ray.dir);
    sc.grads.position[u] += g.n * (dt_total / f.denom) - dm;
    sc.dn[u] += f.m * (-dt_total / f.denom);
    sc.dtu[u] += f.m * (du / g.su);
    sc.dtv[u] += f.m * (dv / g.sv);
    sc.grads.log_scale[u].x += -du * f.u;
    sc.grads.log_scale[u].y += -dv * f.v;
}

inline void frag_geo_backward_3d(const Prepared3D& g, size_t u, const Frag3D& f,
                                 double dalpha, double dz_frag, BackwardScratch& sc) {
    sc.grads.opacity_raw[u] += dalpha * f.w * g.opacity * (1 - g.opacity);
    double dw = dalpha * g.opacity;
    double dq = -0.5 * f.w * dw;
    sc.dca[u] += dq * f.dx * f.dx;
    sc.dcb[u] += dq * 2.0 * f.dx * f.dy;
    sc.dcc[u] += dq * f.dy * f.dy;
    double ddx = dq * (2.0 * g.cinv_a * f.dx + 2.0 * g.cinv_b * f.dy);
    double ddy = dq * (2.0 * g.cinv_c * f.dy + 2.0 * g.cinv_b * f.dx);
    sc.dmean[u].x += -ddx;
    sc.dmean[u].y += -ddy;
    sc.dzc[u] += dz_frag;
}

// Converts the accumulated per-gaussian 3D-mode gradients (projected mean,
// inverse screen covariance, center depth, min-axis normal column, SH view
// direction) into position / quaternion / log-scale gradients.
void finalize_3d_gradient(const Scene& scene, const Camera& cam, int i, Vec2 dmean,
                          double dca, double dcb, double dcc, double dzc, Vec3 dn_col,
                          Vec3 ddiffdir, const Prepared3D& prep, SceneGrads& grads) {
    size_t u = size_t(i);
    Vec3 mu = cam.world_to_cam(scene.position[i]);
    double iz = 1.0 / mu.z;
    Mat3 R = scene.quat[i].to_matrix();
    Vec3 s = scene.scales(i);
    Mat3 S2 = Mat3::diag({s.x * s.x, s.y * s.y, s.z * s.z});
    Mat3 cov_world = R.mul(S2).mul(R.transposed());
    Mat3 cov_cam = cam.R.mul(cov_world).mul(cam.R.transposed());
    double J[2][3] = {{cam.fx * iz, 0.0, -cam.fx * mu.x * iz * iz},
                      {0.0, cam.fy * iz, -cam.fy * mu.y * iz * iz}};

    Vec3 dmu{0, 0, 0};
    // projected mean
    dmu.x += dmean.x * cam.fx * iz;
    dmu.y += dmean.y * cam.fy * iz;
    dmu.z += -dmean.x * cam.fx * mu.x * iz * iz - dmean.y * cam.fy * mu.y * iz * iz;
    // center depth channel
    dmu.z += dzc;

    // inverse covariance -> covariance
    Mat2 cinv;
    cinv.m[0][0] = prep.cinv_a;
    cinv.m[0][1] = cinv.m[1][0] = prep.cinv_b;
    cinv.m[1][1] = prep.cinv_c;
    double Gi[2][2] = {{dca, 0.5 * dcb}, {0.5 * dcb, dcc}};
    double GS[2][2];  // dL/dSigma' = -Cinv Gi Cinv
    for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) {
            double acc = 0;
            for (int p = 0; p < 2; ++p)
                for (int q = 0; q < 2; ++q) acc += cinv.m[a][p] * Gi[p][q] * cinv.m[q][b];
            GS[a][b] = -acc;
        }

    // Sigma' = J cov_cam J^T
    Mat3 dcov_cam;
    for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) {
            double acc = 0;
            for (int p = 0; p < 2; ++p)
                for (int q = 0; q < 2; ++q) acc += J[p][a] * GS[p][q] * J[q][b];
            dcov_cam.m[a][b] = acc;
        }
    double dJ[2][3];
    for (int p = 0; p < 2; ++p)
        for (int b = 0; b < 3; ++b) {
            double acc = 0;
            for (int q = 0; q < 2; ++q)
                for (int a = 0; a < 3; ++a) acc += GS[p][q] * J[q][a] * cov_cam.m[a][b];
            dJ[p][b] = 2.0 * acc;
        }
    dmu.x += dJ[0][2] * (-cam.fx * iz * iz);
    dmu.y += dJ[1][2] * (-cam.fy * iz * iz);
    dmu.z += dJ[0][0] * (-cam.fx * iz * iz) + dJ[1][1] * (-cam.fy * iz * iz) +
             dJ[0][2] * (2.0 * cam.fx * mu.x * iz * iz * iz) +
             dJ[1][2] * (2.0 * cam.fy * mu.y * iz * iz * iz);

    grads.position[u] += cam.R.tmul(dmu);

    // cov_cam = W cov_world W^T
    Mat3 dcov_world = cam.R.transposed().mul(dcov_cam).mul(cam.R);
    // cov_world = R S^2 R^T
    Mat3 dR = (dcov_world + dcov_world.transposed()).mul(R.mul(S2));
    Mat3 RtGR = R.transposed().mul(dcov_world).mul(R);
    grads.log_scale[u].x += 2.0 * s.x * s.x * RtGR.m[0][0];
    grads.log_scale[u].y += 2.0 * s.y * s.y * RtGR.m[1][1];
    grads.log_scale[u].z += 2.0 * s.z * s.z * RtGR.m[2][2];

    // normal feature sits on the min-scale rotation column
    for (int r = 0; r < 3; ++r) dR.m[r][prep.min_axis] += dn_col[r];
    quat_rotation_backward(scene.quat[i], dR, grads.quat[u]);

    if (ddiffdir.norm2() != 0.0) {
        Vec3 vd = prep.view_dir;
        grads.position[u] += (ddiffdir - vd * vd.dot(ddiffdir)) / prep.view_dist;
    }
}

// Applies the per-gaussian finalization (frame/covariance chains) and merges
// sc.grads into the output gradients.
void finalize_scratch(const Scene& scene, const Camera& cam, const RasterCache& cache,
                      BackwardScratch& sc, SceneGrads& grads) {
    bool mode2d = scene.kind == PrimitiveKind::Splat2D;
    int n = scene.count();
    for (int i = 0; i < n; ++i) {
        size_t u = size_t(i);
        if (cache.culled[u]) continue;
        if (mode2d) {
            const Prepared2D& g = cache.prep2d[u];
            Vec3 dd = sc.ddiffdir[u];
            if (dd.norm2() != 0.0) {
                Vec3 vd = g.view_dir;
                sc.grads.position[u] += (dd - vd * vd.dot(dd)) / g.view_dist;
            }
            if (sc.dtu[u].norm2() != 0.0 || sc.dtv[u].norm2() != 0.0 ||
                sc.dn[u].norm2() != 0.0) {
                Mat3 dR;
                for (int r = 0; r < 3; ++r) {
                    dR.m[r][0] = sc.dtu[u][r];
                    dR.m[r][1] = sc.dtv[u][r];
                    dR.m[r][2] = sc.dn[u][r];
                }
                quat_rotation_backward(scene.quat[i], dR, sc.grads.quat[u]);
            }
        } else {
            finalize_3d_gradient(scene, cam, i, sc.dmean[u], sc.dca[u], sc.dcb[u],
                                 sc.dcc[u], sc.dzc[u], sc.dn[u], sc.ddiffdir[u],
                                 cache.prep3d[u], sc.grads);
        }
    }
    grads.add(sc.grads);
}

}  // namespace

void rasterize_backward(const Scene& scene, const Camera& cam, const RenderOptions& opt,
                        const RasterCache& cache, const GBuffer& gbuf,
                        const GBufferGrads& upstream, SceneGrads& grads,
                        std::vector<Vec3>* dradiance) {
    if (!upstream.albedo.empty() &&
        (upstream.albedo.width() != cam.width || upstream.albedo.height() != cam.height))
        throw DataError("rasterize_backward: upstream gradient dimensions mismatch");
    bool mode2d = scene.kind == PrimitiveKind::Splat2D;
    int n = scene.count();
    int n_tiles = cache.tiles_x * cache.tiles_y;
    Vec3 origin = cam.position();
    bool want_rad = dradiance != nullptr;

    int n_threads = std::max(1, opt.threads);
    std::vector<BackwardScratch> scratch(static_cast<size_t>(n_threads));
    for (auto& s : scratch) s.init(scene, mode2d, want_rad);

    parallel_for(n_tiles, opt.threads, [&](int64_t t0, int64_t t1, int tid) {
        BackwardScratch& sc = scratch[size_t(tid)];
        for (int64_t ti = t0; ti < t1; ++ti) {
            const auto& list = cache.tile_lists[size_t(ti)];
            if (list.empty()) continue;
            int tx = int(ti % cache.tiles_x), ty = int(ti / cache.tiles_x);
            int x0 = tx * cache.tile_size, y0 = ty * cache.tile_size;
            int x1 = std::min(x0 + cache.tile_size, cam.width);
            int y1 = std::min(y0 + cache.tile_size, cam.height);
            for (int py = y0; py < y1; ++py) {
                for (int px = x0; px < x1; ++px) {
                    // upstream per-pixel gradients
                    Vec3 dAlb = fetch3(upstream.albedo, px, py);
                    double dMet = fetch1(upstream.metallic, px, py);
                    double dRgh = fetch1(upstream.roughness, px, py);
                    Vec3 dNrm = fetch3(upstream.normal, px, py);
                    Vec3 dDif = fetch3(upstream.diffuse, px, py);
                    Vec3 dRad = fetch3(upstream.radiance, px, py);
                    double dDepth = fetch1(upstream.depth, px, py);
                    double dA = fetch1(upstream.alpha, px, py);

                    double A = gbuf.alpha.at(px, py);
                    double gZnum = 0.0;
                    if (dDepth != 0.0 && A > 0.0) {
                        double depth = gbuf.depth.at(px, py);
                        gZnum = dDepth / A;
                        dA += -dDepth * depth / A;
                    }
                    bool any = dA != 0.0 || gZnum != 0.0 || dMet != 0.0 || dRgh != 0.0 ||
                               dAlb.norm2() != 0.0 || dNrm.norm2() != 0.0 ||
                               dDif.norm2() != 0.0 || dRad.norm2() != 0.0;
                    if (!any) continue;

                    // forward totals of the blended sums
                    Vec3 totAlb = fetch3(gbuf.albedo, px, py);
                    double totMet = fetch1(gbuf.metallic, px, py);
                    double totRgh = fetch1(gbuf.roughness, px, py);
                    Vec3 totNrm = fetch3(gbuf.normal, px, py);
                    Vec3 totDif = fetch3(gbuf.diffuse, px, py);
                    Vec3 totRad = fetch3(gbuf.radiance, px, py);
                    double totZ = (gbuf.depth.empty() ? 0.0 : gbuf.depth.at(px, py)) * A;

                    // running prefixes (blended contributions of fragments seen so far)
                    Vec3 preAlb{0, 0, 0}, preNrm{0, 0, 0}, preDif{0, 0, 0}, preRad{0, 0, 0};
                    double preMet = 0, preRgh = 0, preA = 0, preZ = 0;

                    auto alpha_terms = [&](double fterm, double total, double prefix,
                                           double contrib, double T, double one_minus) {
                        // d(blend)/d(alpha_i) = f_i T_i - suffix / (1 - alpha_i)
                        double suffix = total - prefix - contrib;
                        return fterm * T - (one_minus > 1e-12 ? suffix / one_minus : 0.0);
                    };

                    if (mode2d) {
                        PixelRay ray = make_ray(cam, origin, px, py);
                        walk_pixel_2d(cache.prep2d, list, ray, opt,
                            [&](int32_t gi, const Prepared2D& g, const Frag2D& f,
                                double alpha, double T) {
                                size_t u = size_t(gi);
                                double at = alpha * T;
                                double one_minus = 1.0 - alpha;
                                double dalpha = 0.0;

                                if (dAlb.norm2() != 0.0 || !gbuf.albedo.empty()) {
                                    Vec3 c = g.albedo * at;
                                    if (dAlb.norm2() != 0.0) {
                                        Vec3 da = dAlb * at;  // d/d activated albedo
                                        sc.grads.albedo_raw[u] += Vec3{
                                            da.x * g.albedo.x * (1 - g.albedo.x),
                                            da.y * g.albedo.y * (1 - g.albedo.y),
                                            da.z * g.albedo.z * (1 - g.albedo.z)};
                                        dalpha += dAlb.x * alpha_terms(g.albedo.x, totAlb.x,
                                                                       preAlb.x, c.x, T, one_minus);
                                        dalpha += dAlb.y * alpha_terms(g.albedo.y, totAlb.y,
                                                                       preAlb.y, c.y, T, one_minus);
                                        dalpha += dAlb.z * alpha_terms(g.albedo.z, totAlb.z,
                                                                       preAlb.z, c.z, T, one_minus);
                                    }
                                    preAlb += c;
                                }
                                if (dMet != 0.0 || !gbuf.metallic.empty()) {
                                    double c = g.metallic * at;
                                    if (dMet != 0.0) {
                                        sc.grads.metallic_raw[u] +=
                                            dMet * at * g.metallic * (1 - g.metallic);
                                        dalpha += dMet * alpha_terms(g.metallic, totMet, preMet,
                                                                     c, T, one_minus);
                                    }
                                    preMet += c;
                                }
                                if (dRgh != 0.0 || !gbuf.roughness.empty()) {
                                    double c = g.roughness * at;
                                    if (dRgh != 0.0) {
                                        sc.grads.roughness_raw[u] +=
                                            dRgh * at * g.roughness * (1 - g.roughness);
                                        dalpha += dRgh * alpha_terms(g.roughness, totRgh, preRgh,
                                                                     c, T, one_minus);
                                    }
                                    preRgh += c;
                                }
                                if (dNrm.norm2() != 0.0 || !gbuf.normal.empty()) {
                                    Vec3 nf = g.n * g.sign;
                                    Vec3 c = nf * at;
                                    if (dNrm.norm2() != 0.0) {
                                        sc.dn[u] += dNrm * (at * g.sign);
                                        dalpha += dNrm.x * alpha_terms(nf.x, totNrm.x, preNrm.x,
                                                                       c.x, T, one_minus);
                                        dalpha += dNrm.y * alpha_terms(nf.y, totNrm.y, preNrm.y,
                                                                       c.y, T, one_minus);
                                        dalpha += dNrm.z * alpha_terms(nf.z, totNrm.z, preNrm.z,
                                                                       c.z, T, one_minus);
                                    }
                                    preNrm += c;
                                }
                                if (dDif.norm2() != 0.0 || !gbuf.diffuse.empty()) {
                                    Vec3 c = g.diffuse_rgb * at;
                                    if (dDif.norm2() != 0.0) {
                                        Vec3 up = dDif * at;
                                        Vec3 ddir = eval_sh_backward(
                                            scene.diffuse_sh_degree, scene.diffuse_coeffs(gi),
                                            g.view_dir, up,
                                            &sc.grads.diffuse_sh[u * 3 * size_t(scene.nc_diffuse())]);
                                        sc.ddiffdir[u] += ddir;
                                        dalpha += dDif.x * alpha_terms(g.diffuse_rgb.x, totDif.x,
                                                                       preDif.x, c.x, T, one_minus);
                                        dalpha += dDif.y * alpha_terms(g.diffuse_rgb.y, totDif.y,
                                                                       preDif.y, c.y, T, one_minus);
                                        dalpha += dDif.z * alpha_terms(g.diffuse_rgb.z, totDif.z,
                                                                       preDif.z, c.z, T, one_minus);
                                    }
                                    preDif += c;
                                }
                                if ((opt.channels & kChRadiance) && opt.radiance) {
                                    Vec3 rad = opt.radiance[gi];
                                    Vec3 c = rad * at;
                                    if (dRad.norm2() != 0.0) {
                                        if (want_rad) sc.dradiance[u] += dRad * at;
                                        dalpha += dRad.x * alpha_terms(rad.x, totRad.x, preRad.x,
                                                                       c.x, T, one_minus);
                                        dalpha += dRad.y * alpha_terms(rad.y, totRad.y, preRad.y,
                                                                       c.y, T, one_minus);
                                        dalpha += dRad.z * alpha_terms(rad.z, totRad.z, preRad.z,
                                                                       c.z, T, one_minus);
                                    }
                                    preRad += c;
                                }
                                double dz_frag = 0.0;
                                if (gZnum != 0.0) {
                                    double c = f.z * at;
                                    dz_frag = gZnum * at;
                                    dalpha += gZnum * alpha_terms(f.z, totZ, preZ, c, T, one_minus);
                                    preZ += c;
                                } else if (!gbuf.depth.empty()) {
                                    preZ += f.z * at;
                                }
                                if (dA != 0.0) {
                                    double c = at;
                                    dalpha += dA * alpha_terms(1.0, A, preA, c, T, one_minus);
                                }
                                preA += at;

                                frag_geo_backward_2d(g, u, ray, f, dalpha, dz_frag, sc);
                            });
                    } else {
                        walk_pixel_3d(cache.prep3d, list, px, py, opt,
                            [&](int32_t gi, const Prepared3D& g, const Frag3D& f,
                                double alpha, double T) {
                                size_t u = size_t(gi);
                                double at = alpha * T;
                                double one_minus = 1.0 - alpha;
                                double dalpha = 0.0;

                                if (dAlb.norm2() != 0.0 || !gbuf.albedo.empty()) {
                                    Vec3 c = g.albedo * at;
                                    if (dAlb.norm2() != 0.0) {
                                        Vec3 da = dAlb * at;
                                        sc.grads.albedo_raw[u] += Vec3{
                                            da.x * g.albedo.x * (1 - g.albedo.x),
                                            da.y * g.albedo.y * (1 - g.albedo.y),
                                            da.z * g.albedo.z * (1 - g.albedo.z)};
                                        dalpha += dAlb.x * alpha_terms(g.albedo.x, totAlb.x,
                                                                       preAlb.x, c.x, T, one_minus);
                                        dalpha += dAlb.y * alpha_terms(g.albedo.y, totAlb.y,
                                                                       preAlb.y, c.y, T, one_minus);
                                        dalpha += dAlb.z * alpha_terms(g.albedo.z, totAlb.z,
                                                                       preAlb.z, c.z, T, one_minus);
                                    }
                                    preAlb += c;
                                }
                                if (dMet != 0.0 || !gbuf.metallic.empty()) {
                                    double c = g.metallic * at;
                                    if (dMet != 0.0) {
                                        sc.grads.metallic_raw[u] +=
                                            dMet * at * g.metallic * (1 - g.metallic);
                                        dalpha += dMet * alpha_terms(g.metallic, totMet, preMet,
                                                                     c, T, one_minus);
                                    }
                                    preMet += c;
                                }
                                if (dRgh != 0.0 || !gbuf.roughness.empty()) {
                                    double c = g.roughness * at;
                                    if (dRgh != 0.0) {
                                        sc.grads.roughness_raw[u] +=
                                            dRgh * at * g.roughness * (1 - g.roughness);
                                        dalpha += dRgh * alpha_terms(g.roughness, totRgh, preRgh,
                                                                     c, T, one_minus);
                                    }
                                    preRgh += c;
                                }
                                if (dNrm.norm2() != 0.0 || !gbuf.normal.empty()) {
                                    Vec3 nf = g.normal;
                                    Vec3 c = nf * at;
                                    if (dNrm.norm2() != 0.0) {
                                        sc.dn[u] += dNrm * (at * g.sign);
                                        dalpha += dNrm.x * alpha_terms(nf.x, totNrm.x, preNrm.x,
                                                                       c.x, T, one_minus);
                                        dalpha += dNrm.y * alpha_terms(nf.y, totNrm.y, preNrm.y,
                                                                       c.y, T, one_minus);
                                        dalpha += dNrm.z * alpha_terms(nf.z, totNrm.z, preNrm.z,
                                                                       c.z, T, one_minus);
                                    }
                                    preNrm += c;
                                }
                                if (dDif.norm2() != 0.0 || !gbuf.diffuse.empty()) {
                                    Vec3 c = g.diffuse_rgb * at;
                                    if (dDif.norm2() != 0.0) {
                                        Vec3 up = dDif * at;
                                        Vec3 ddir = eval_sh_backward(
                                            scene.diffuse_sh_degree, scene.diffuse_coeffs(gi),
                                            g.view_dir, up,
                                            &sc.grads.diffuse_sh[u * 3 * size_t(scene.nc_diffuse())]);
                                        sc.ddiffdir[u] += ddir;
                                        dalpha += dDif.x * alpha_terms(g.diffuse_rgb.x, totDif.x,
                                                                       preDif.x, c.x, T, one_minus);
                                        dalpha += dDif.y * alpha_terms(g.diffuse_rgb.y, totDif.y,
                                                                       preDif.y, c.y, T, one_minus);
                                        dalpha += dDif.z * alpha_terms(g.diffuse_rgb.z, totDif.z,
                                                                       preDif.z, c.z, T, one_minus);
                                    }
                                    preDif += c;
                                }
                                if ((opt.channels & kChRadiance) && opt.radiance) {
                                    Vec3 rad = opt.radiance[gi];
                                    Vec3 c = rad * at;
                                    if (dRad.norm2() != 0.0) {
                                        if (want_rad) sc.dradiance[u] += dRad * at;
                                        dalpha += dRad.x * alpha_terms(rad.x, totRad.x, preRad.x,
                                                                       c.x, T, one_minus);
                                        dalpha += dRad.y * alpha_terms(rad.y, totRad.y, preRad.y,
                                                                       c.y, T, one_minus);
                                        dalpha += dRad.z * alpha_terms(rad.z, totRad.z, preRad.z,
                                                                       c.z, T, one_minus);
                                    }
                                    preRad += c;
                                }
                                double dz_frag = 0.0;
                                if (gZnum != 0.0) {
                                    double c = g.center_z * at;
                                    dz_frag = gZnum * at;
                                    dalpha += gZnum * alpha_terms(g.center_z, totZ, preZ, c, T,
                                                                  one_minus);
                                    preZ += c;
                                } else if (!gbuf.depth.empty()) {
                                    preZ += g.center_z * at;
                                }
                                if (dA != 0.0) {
                                    dalpha += dA * alpha_terms(1.0, A, preA, at, T, one_minus);
                                }
                                preA += at;

                                frag_geo_backward_3d(g, u, f, dalpha, dz_frag, sc);
                            });
                    }
                }
            }
        }
    });

    // merge per-thread buffers in thread order, then finalize per gaussian
    BackwardScratch& total = scratch[0];
    for (int t = 1; t < n_threads; ++t) total.merge(scratch[size_t(t)]);
    if (want_rad) {
        dradiance->assign(size_t(n), Vec3{});
        for (int i = 0; i < n; ++i) (*dradiance)[size_t(i)] = total.dradiance[size_t(i)];
    }
    finalize_scratch(scene, cam, cache, total, grads);
    (void)mode2d;
}

Image render_indirect(const Scene& scene, const Camera& cam, const RenderOptions& opt,
                      const RasterCache& cache, const Image& refl_dir,
                      const std::vector<uint8_t>& valid) {
    Image out(cam.width, cam.height, 3);
    bool mode2d = scene.kind == PrimitiveKind::Splat2D;
    int deg = scene.indirect_sh_degree;
    int nc = scene.nc_indirect();
    Vec3 origin = cam.position();
    int n_tiles = cache.tiles_x * cache.tiles_y;

    parallel_for(n_tiles, opt.threads, [&](int64_t t0, int64_t t1, int) {
        for (int64_t ti = t0; ti < t1; ++ti) {
            const auto& list = cache.tile_lists[size_t(ti)];
            if (list.empty()) continue;
            int tx = int(ti % cache.tiles_x), ty = int(ti / cache.tiles_x);
            int x0 = tx * cache.tile_size, y0 = ty * cache.tile_size;
            int x1 = std::min(x0 + cache.tile_size, cam.width);
            int y1 = std::min(y0 + cache.tile_size, cam.height);
            for (int py = y0; py < y1; ++py) {
                for (int px = x0; px < x1; ++px) {
                    if (!valid[size_t(py) * cam.width + px]) continue;
                    Vec3 r = refl_dir.rgb(px, py);
                    double basis[16];
                    sh_basis(deg, r, basis);
                    Vec3 acc{0, 0, 0};
                    auto blend = [&](const double* coeffs, double at) {
                        Vec3 val{0, 0, 0};
                        for (int k = 0; k < nc; ++k) {
                            val.x += coeffs[3 * k + 0] * basis[k];
                            val.y += coeffs[3 * k + 1] * basis[k];
                            val.z += coeffs[3 * k + 2] * basis[k];
                        }
                        acc += val * at;
                    };
                    if (mode2d) {
                        PixelRay ray = make_ray(cam, origin, px, py);
                        walk_pixel_2d(cache.prep2d, list, ray, opt,
                                      [&](int32_t gi, const Prepared2D&, const Frag2D&,
                                          double alpha, double T) {
                                          blend(scene.indirect_coeffs(gi), alpha * T);
                                      });
                    } else {
                        walk_pixel_3d(cache.prep3d, list, px, py, opt,
                                      [&](int32_t gi, const Prepared3D&, const Frag3D&,
                                          double alpha, double T) {
                                          blend(scene.indirect_coeffs(gi), alpha * T);
                                      });
                    }
                    out.set_rgb(px, py, acc);
                }
            }
        }
    });
    return out;
}

void render_indirect_backward(const Scene& scene, const Camera& cam,
                              const RenderOptions& opt, const RasterCache& cache,
                              const Image& refl_dir, const std::vector<uint8_t>& valid,
                              const Image& lind, const Image& dLind, SceneGrads& grads,
                              Image& drefl_dir) {
    bool mode2d = scene.kind == PrimitiveKind::Splat2D;
    int deg = scene.indirect_sh_degree;
    int nc = scene.nc_indirect();
    Vec3 origin = cam.position();
    int n_tiles = cache.tiles_x * cache.tiles_y;
    if (drefl_dir.empty()) drefl_dir = Image(cam.width, cam.height, 3);

    int n_threads = std::max(1, opt.threads);
    std::vector<BackwardScratch> scratch(static_cast<size_t>(n_threads));
    for (auto& s : scratch) s.init(scene, mode2d, false);

    parallel_for(n_tiles, opt.threads, [&](int64_t t0, int64_t t1, int tid) {
        BackwardScratch& sc = scratch[size_t(tid)];
        for (int64_t ti = t0; ti < t1; ++ti) {
            const auto& list = cache.tile_lists[size_t(ti)];
            if (list.empty()) continue;
            int tx = int(ti % cache.tiles_x), ty = int(ti / cache.tiles_x);
            int x0 = tx * cache.tile_size, y0 = ty * cache.tile_size;
            int x1 = std::min(x0 + cache.tile_size, cam.width);
            int y1 = std::min(y0 + cache.tile_size, cam.height);
            for (int py = y0; py < y1; ++py) {
                for (int px = x0; px < x1; ++px) {
                    if (!valid[size_t(py) * cam.width + px]) continue;
                    Vec3 dL = dLind.rgb(px, py);
                    if (dL.norm2() == 0.0) continue;
                    Vec3 r = refl_dir.rgb(px, py);
                    double basis[16];
                    Vec3 bgrad[16];
                    sh_basis(deg, r, basis);
                    sh_basis_grad(deg, r, bgrad);
                    Vec3 tot = lind.rgb(px, py);
                    Vec3 pre{0, 0, 0};
                    Vec3 ddir_px{0, 0, 0};

                    auto visit_common = [&](int32_t gi, double alpha, double T) {
                        size_t u = size_t(gi);
                        double at = alpha * T;
                        const double* coeffs = scene.indirect_coeffs(gi);
                        Vec3 val{0, 0, 0};
                        double* dcoef = &sc.grads.indirect_sh[u * 3 * size_t(nc)];
                        for (int k = 0; k < nc; ++k) {
                            val.x += coeffs[3 * k + 0] * basis[k];
                            val.y += coeffs[3 * k + 1] * basis[k];
                            val.z += coeffs[3 * k + 2] * basis[k];
                            dcoef[3 * k + 0] += dL.x * at * basis[k];
                            dcoef[3 * k + 1] += dL.y * at * basis[k];
                            dcoef[3 * k + 2] += dL.z * at * basis[k];
                            double cdotu = coeffs[3 * k + 0] * dL.x + coeffs[3 * k + 1] * dL.y +
                                           coeffs[3 * k + 2] * dL.z;
                            ddir_px += bgrad[k] * (cdotu * at);
                        }
                        Vec3 c = val * at;
                        double one_minus = 1.0 - alpha;
                        double dalpha = 0.0;
                        auto term = [&](double fv, double totv, double prev, double cv,
                                        double up) {
                            double suffix = totv - prev - cv;
                            return up * (fv * T - (one_minus > 1e-12 ? suffix / one_minus : 0.0));
                        };
                        dalpha += term(val.x, tot.x, pre.x, c.x, dL.x);
                        dalpha += term(val.y, tot.y, pre.y, c.y, dL.y);
                        dalpha += term(val.z, tot.z, pre.z, c.z, dL.z);
                        pre += c;
                        return dalpha;
                    };

                    if (mode2d) {
                        PixelRay ray = make_ray(cam, origin, px, py);
                        walk_pixel_2d(cache.prep2d, list, ray, opt,
                                      [&](int32_t gi, const Prepared2D& g, const Frag2D& f,
                                          double alpha, double T) {
                                          double dalpha = visit_common(gi, alpha, T);
                                          frag_geo_backward_2d(g, size_t(gi), ray, f, dalpha,
                                                               0.0, sc);
                                      });
                    } else {
                        walk_pixel_3d(cache.prep3d, list, px, py, opt,
                                      [&](int32_t gi, const Prepared3D& g, const Frag3D& f,
                                          double alpha, double T) {
                                          double dalpha = visit_common(gi, alpha, T);
                                          frag_geo_backward_3d(g, size_t(gi), f, dalpha, 0.0,
                                                               sc);
                                      });
                    }
                    drefl_dir.add_rgb(px, py, ddir_px);
                }
            }
        }
    });

    BackwardScratch& total = scratch[0];
    for (int t = 1; t < n_threads; ++t) total.merge(scratch[size_t(t)]);
    finalize_scratch(scene, cam, cache, total, grads);
}

NormalFromDepth depth_to_normal(const Image& depth, const Image& alpha, const Camera& cam,
                                double alpha_thresh) {
    int w = depth.width(), h = depth.height();
    NormalFromDepth out;
    out.normal = Image(w, h, 3);
    out.valid.assign(size_t(w) * h, 0);
    auto K = [&](int x, int y) {
        return Vec3{(x + 0.5 - cam.cx) / cam.fx, (y + 0.5 - cam.cy) / cam.fy, 1.0};
    };
    for (int y = 1; y < h - 1; ++y) {
        for (int x = 1; x < w - 1; ++x) {
            if (alpha.at(x, y) <= alpha_thresh || alpha.at(x - 1, y) <= alpha_thresh ||
                alpha.at(x + 1, y) <= alpha_thresh || alpha.at(x, y - 1) <= alpha_thresh ||
                alpha.at(x, y + 1) <= alpha_thresh)
                continue;
            Vec3 pxp = K(x + 1, y) * depth.at(x + 1, y);
            Vec3 pxm = K(x - 1, y) * depth.at(x - 1, y);
            Vec3 pyp = K(x, y + 1) * depth.at(x, y + 1);
            Vec3 pym = K(x, y - 1) * depth.at(x, y - 1);
            Vec3 ddx = pxp - pxm;
            Vec3 ddy = pyp - pym;
            Vec3 c = ddy.cross(ddx);  // view-facing: camera looks along +z
            double n2 = c.norm2();
            if (n2 < 1e-24) continue;
            Vec3 n_cam = c / std::sqrt(n2);
            out.normal.set_rgb(x, y, cam.R.tmul(n_cam));
            out.valid[size_t(y) * w + x] = 1;
        }
    }
    return out;
}

void depth_to_normal_backward(const Image& depth, const Image& alpha, const Camera& cam,
                              const NormalFromDepth& fwd, const Image& dnormal,
                              Image& ddepth, double alpha_thresh) {
    (void)alpha;
    (void)alpha_thresh;
    int w = depth.width(), h = depth.height();
    if (ddepth.empty()) ddepth = Image(w, h, 1);
    auto K = [&](int x, int y) {
        return Vec3{(x + 0.5 - cam.cx) / cam.fx, (y + 0.5 - cam.cy) / cam.fy, 1.0};
    };
    for (int y = 1; y < h - 1; ++y) {
        for (int x = 1; x < w - 1; ++x) {
            if (!fwd.valid[size_t(y) * w + x]) continue;
            Vec3 gw = dnormal.rgb(x, y);
            if (gw.norm2() == 0.0) continue;
            Vec3 g_cam = cam.R.mul(gw);

            Vec3 pxp = K(x + 1, y) * depth.at(x + 1, y);
            Vec3 pxm = K(x - 1, y) * depth.at(x - 1, y);
            Vec3 pyp = K(x, y + 1) * depth.at(x, y + 1);
            Vec3 pym = K(x, y - 1) * depth.at(x, y - 1);
            Vec3 ddx = pxp - pxm;
            Vec3 ddy = pyp - pym;
            Vec3 c = ddy.cross(ddx);
            double nrm = c.norm();
            Vec3 n = c / nrm;
            // normalize backward
            Vec3 dc = (g_cam - n * n.dot(g_cam)) / nrm;
            // c = ddy x ddx
            Vec3 dddy = ddx.cross(dc);
            Vec3 dddx = dc.cross(ddy);
            ddepth.at(x + 1, y) += dddx.dot(K(x + 1, y));
            ddepth.at(x - 1, y) -= dddx.dot(K(x - 1, y));
            ddepth.at(x, y + 1) += dddy.dot(K(x, y + 1));
            ddepth.at(x, y - 1) -= dddy.dot(K(x, y - 1));
        }
    }
}

}  // namespace refsplat
