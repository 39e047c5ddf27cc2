#pragma once

#include "refsplat/raster.hpp"

namespace refsplat::oracle {

/// Reference G-buffer blender: per pixel, intersects every gaussian through
/// the homogeneous plane formulation (independent of the production
/// geometric route), sorts fragments by (center depth, index) and composites
/// front-to-back with the documented admission and termination rules.
GBuffer naive_rasterize(const Scene& scene, const Camera& cam, const RenderOptions& opt);

}  // namespace refsplat::oracle
