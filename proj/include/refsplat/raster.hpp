#pragma once

#include <cstdint>
#include <vector>

#include "refsplat/camera.hpp"
#include "refsplat/image.hpp"
#include "refsplat/scene.hpp"

namespace refsplat {

// Blendable feature channels. Selections compose; each channel's result is
// independent of which others are enabled.
enum FeatureChannel : uint32_t {
    kChAlbedo = 1u << 0,
    kChMetallic = 1u << 1,
    kChRoughness = 1u << 2,
    kChNormal = 1u << 3,
    kChDiffuse = 1u << 4,   // per-gaussian SH color at the view direction
    kChDepth = 1u << 5,     // alpha-normalized expected depth
    kChRadiance = 1u << 6,  // externally supplied per-gaussian color (stage 1)
};

inline constexpr uint32_t kChDeferredSet =
    kChAlbedo | kChMetallic | kChRoughness | kChNormal | kChDiffuse | kChDepth;
inline constexpr uint32_t kChStage1Set = kChRadiance | kChNormal | kChDepth;

struct RenderOptions {
    uint32_t channels = kChDeferredSet;
    int tile_size = 16;
    double near_plane = 0.01;
    double min_transmittance = 1e-4;  // early traversal stop
    double weight_cutoff = 1.0 / 255.0;
    double sigma_cutoff = 3.0;  // fragment admission radius in sigma units
    int threads = 1;
    // per-gaussian radiance for the kChRadiance channel (size = scene count)
    const Vec3* radiance = nullptr;
};

/// Alpha-blended feature maps. All blended channels are premultiplied
/// (convex-combination-times-alpha); depth is divided by alpha afterwards.
struct GBuffer {
    int width = 0, height = 0;
    uint32_t channels = 0;
    Image albedo;     // 3
    Image metallic;   // 1
    Image roughness;  // 1
    Image normal;     // 3, blended; renormalize before shading
    Image diffuse;    // 3
    Image radiance;   // 3
    Image depth;      // 1, expected depth (0 where alpha = 0)
    Image alpha;      // 1, accumulated alpha in [0, 1]
};

/// Per-pixel upstream gradients for rasterize_backward. Empty images are
/// treated as zero. `depth` is w.r.t. the normalized expected depth.
struct GBufferGrads {
    Image albedo, metallic, roughness, normal, diffuse, radiance, depth, alpha;
};

// Per-view prepared primitive state (activated values, tangent frame with the
// view-facing sign, per-view SH color, sort key) plus per-tile candidate
// lists. Kept by the forward pass so the backward pass and the indirect pass
// replay the identical fragment order.
struct Prepared2D {
    Vec3 pos, tu, tv, n;  // n = tu x tv (unit, unflipped)
    double sign = 1.0;    // view-facing flip applied to the normal feature
    double su = 1, sv = 1, opacity = 0;
    Vec3 albedo;
    double metallic = 0, roughness = 0;
    Vec3 diffuse_rgb;
    Vec3 view_dir;  // unit, camera -> gaussian
    double view_dist = 1;
    double center_z = 0;
};

struct Prepared3D {
    Vec3 pos;
    Vec2 mean_px;
    double center_z = 0;
    double cinv_a = 0, cinv_b = 0, cinv_c = 0;  // inverse screen covariance
    double opacity = 0;
    Vec3 albedo;
    double metallic = 0, roughness = 0;
    Vec3 diffuse_rgb;
    Vec3 normal;  // min-scale axis, view-facing
    double sign = 1.0;
    int min_axis = 2;
    Vec3 view_dir;
    double view_dist = 1;
};

struct RasterCache {
    int tiles_x = 0, tiles_y = 0, tile_size = 16;
    std::vector<std::vector<int32_t>> tile_lists;  // sorted by (center_z, index)
    std::vector<Prepared2D> prep2d;
    std::vector<Prepared3D> prep3d;
    std::vector<uint8_t> culled;
};

/// Ray-splat intersection for one pixel: local coordinates, camera-space
/// depth of the hit and the gaussian weight exp(-(u^2+v^2)/2). Returns false
/// on a miss: plane parallel to the ray (determinant below 1e-12), hit behind
/// the near plane, or weight outside the admission cutoffs.
struct SplatHit {
    double u = 0, v = 0, depth = 0, weight = 0;
};

bool ray_splat_intersect(const Gaussian2D& g, const Camera& cam, double px, double py,
                         SplatHit& hit, double near_plane = 0.01, double sigma_cutoff = 3.0,
                         double weight_cutoff = 1.0 / 255.0);

/// Front-to-back alpha blending of the selected channels (Eq. 2 / Eq. 5
/// composites). Deterministic: fragments ordered by (center depth, index).
GBuffer rasterize(const Scene& scene, const Camera& cam, const RenderOptions& opt,
                  RasterCache* cache = nullptr);

/// Gradients of every blended attribute, opacity and the geometry parameters
/// entering alpha, replayed in a second front-to-back pass using the
/// forward totals. `dradiance` (when non-null) receives per-gaussian
/// upstream gradients of the stage-1 radiance channel.
void rasterize_backward(const Scene& scene, const Camera& cam, const RenderOptions& opt,
                        const RasterCache& cache, const GBuffer& gbuf,
                        const GBufferGrads& upstream, SceneGrads& grads,
                        std::vector<Vec3>* dradiance = nullptr);

/// Indirect-light map: per fragment, the gaussian's indirect SH evaluated in
/// the pixel's reflected direction, blended with the main pass's fragment
/// order and alphas. Pixels with valid=0 stay zero.
Image render_indirect(const Scene& scene, const Camera& cam, const RenderOptions& opt,
                      const RasterCache& cache, const Image& refl_dir,
                      const std::vector<uint8_t>& valid);

/// Backward of render_indirect: SH-coefficient and blending-geometry
/// gradients into `grads`, plus per-pixel reflected-direction gradients
/// accumulated into `drefl_dir` (3 channels). `lind` is the forward output.
void render_indirect_backward(const Scene& scene, const Camera& cam,
                              const RenderOptions& opt, const RasterCache& cache,
                              const Image& refl_dir, const std::vector<uint8_t>& valid,
                              const Image& lind, const Image& dLind, SceneGrads& grads,
                              Image& drefl_dir);

/// Surface normals from the expected-depth map: unproject the 3x3
/// neighborhood, cross the central differences, normalize, rotate to world.
/// Pixels are valid only when the center and its 4 neighbors all have
/// alpha > alpha_thresh and the cross product is non-degenerate.
struct NormalFromDepth {
    Image normal;                // 3, world space, view-facing; 0 where invalid
    std::vector<uint8_t> valid;  // per pixel
};

NormalFromDepth depth_to_normal(const Image& depth, const Image& alpha, const Camera& cam,
                                double alpha_thresh = 0.5);

void depth_to_normal_backward(const Image& depth, const Image& alpha, const Camera& cam,
                              const NormalFromDepth& fwd, const Image& dnormal,
                              Image& ddepth, double alpha_thresh = 0.5);

}  // namespace refsplat
