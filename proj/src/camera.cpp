#include "refsplat/camera.hpp"

namespace refsplat {

Camera make_lookat_camera(Vec3 eye, Vec3 target, Vec3 up_hint, double fov_x_rad,
                          int width, int height) {
    Vec3 fwd = (target - eye).normalized();          // camera +z
    Vec3 right = fwd.cross(up_hint).normalized();    // camera +x
    if (right.norm2() < 1e-12) right = fwd.cross(Vec3{0, 1, 0}).normalized();
    Vec3 down = fwd.cross(right).normalized();       // camera +y (y points down)

    Camera cam;
    // rows of R are the camera axes expressed in world coordinates
    cam.R.m[0][0] = right.x; cam.R.m[0][1] = right.y; cam.R.m[0][2] = right.z;
    cam.R.m[1][0] = down.x;  cam.R.m[1][1] = down.y;  cam.R.m[1][2] = down.z;
    cam.R.m[2][0] = fwd.x;   cam.R.m[2][1] = fwd.y;   cam.R.m[2][2] = fwd.z;
    cam.t = cam.R.mul(eye) * -1.0;
    cam.width = width;
    cam.height = height;
    cam.fx = 0.5 * width / std::tan(0.5 * fov_x_rad);
    cam.fy = cam.fx;
    cam.cx = 0.5 * width;
    cam.cy = 0.5 * height;
    return cam;
}

}  // namespace refsplat
