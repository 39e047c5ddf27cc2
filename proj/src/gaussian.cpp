#include "refsplat/gaussian.hpp"

namespace refsplat {

Mat4 splat_to_world(const Gaussian2D& g) {
    Mat4 H;
    Vec3 cu = g.tangent_u * g.scale_u;
    Vec3 cv = g.tangent_v * g.scale_v;
    for (int i = 0; i < 3; ++i) {
        H.m[i][0] = cu[i];
        H.m[i][1] = cv[i];
        H.m[i][2] = 0.0;
        H.m[i][3] = g.position[i];
    }
    H.m[3][0] = H.m[3][1] = H.m[3][2] = 0.0;
    H.m[3][3] = 1.0;
    return H;
}

Mat2 project_covariance_3d(const Gaussian3D& g, const Camera& cam, bool* culled,
                           double near_plane) {
    Vec3 mu = cam.world_to_cam(g.position);
    if (mu.z <= near_plane) {
        if (culled) *culled = true;
        return Mat2{};
    }
    if (culled) *culled = false;

    Mat3 R = g.rotation.to_matrix();
    Mat3 S2 = Mat3::diag({g.scale.x * g.scale.x, g.scale.y * g.scale.y,
                          g.scale.z * g.scale.z});
    Mat3 cov_world = R.mul(S2).mul(R.transposed());
    Mat3 cov_cam = cam.R.mul(cov_world).mul(cam.R.transposed());

    // affine Jacobian of perspective projection at the center
    double iz = 1.0 / mu.z;
    double J[2][3] = {{cam.fx * iz, 0.0, -cam.fx * mu.x * iz * iz},
                      {0.0, cam.fy * iz, -cam.fy * mu.y * iz * iz}};
    Mat2 out;
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) {
            double s = 0.0;
            for (int a = 0; a < 3; ++a)
                for (int b = 0; b < 3; ++b) s += J[i][a] * cov_cam.m[a][b] * J[j][b];
            out.m[i][j] = s;
        }
    double off = 0.5 * (out.m[0][1] + out.m[1][0]);
    out.m[0][1] = out.m[1][0] = off;
    return out;
}

}  // namespace refsplat
