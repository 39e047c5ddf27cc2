#pragma once

#include "refsplat/common.hpp"
#include "refsplat/vecmath.hpp"

namespace refsplat {

/// Pinhole camera. Internal convention: x right, y down, z forward (camera
/// looks along +z). `R`/`t` are the world-to-camera rigid transform.
struct Camera {
    Mat3 R = Mat3::identity();
    Vec3 t{0, 0, 0};
    double fx = 0, fy = 0, cx = 0, cy = 0;
    int width = 0, height = 0;

    Vec3 position() const { return R.tmul(t) * -1.0; }

    Vec3 world_to_cam(Vec3 p) const { return R.mul(p) + t; }
    Vec3 cam_to_world(Vec3 p) const { return R.tmul(p - t); }

    // world-space unit direction through the pixel point (px, py)
    Vec3 ray_dir(double px, double py) const {
        Vec3 d{(px - cx) / fx, (py - cy) / fy, 1.0};
        return R.tmul(d).normalized();
    }

    // camera-space z of a world point
    double depth_of(Vec3 p) const { return R.row(2).dot(p) + t.z; }

    // projects a world point; returns false when behind the camera
    bool project(Vec3 p, Vec2& pix, double& z) const {
        Vec3 c = world_to_cam(p);
        z = c.z;
        if (c.z <= 0.0) return false;
        pix = {fx * c.x / c.z + cx, fy * c.y / c.z + cy};
        return true;
    }

    // unprojects pixel + camera-space depth to a camera-space point
    Vec3 unproject_cam(double px, double py, double z) const {
        return {(px - cx) / fx * z, (py - cy) / fy * z, z};
    }

    // rotation orthonormal within tol and right-handed
    bool rotation_valid(double tol = 1e-6) const {
        Mat3 should_be_i = R.mul(R.transposed());
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                double want = i == j ? 1.0 : 0.0;
                if (std::abs(should_be_i.m[i][j] - want) > tol) return false;
            }
        return std::abs(R.det() - 1.0) < 1e-4;
    }
};

/// Camera on a sphere around `target`, looking at it. `up_hint` picks the
/// roll; used by tests and fixture generation.
Camera make_lookat_camera(Vec3 eye, Vec3 target, Vec3 up_hint, double fov_x_rad,
                          int width, int height);

}  // namespace refsplat
