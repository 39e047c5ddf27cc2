#include "refsplat/common.hpp"

#include <algorithm>

#include "refsplat/vecmath.hpp"

namespace refsplat {

int hardware_threads() {
    unsigned n = std::thread::hardware_concurrency();
    return n == 0 ? 1 : int(n);
}

void parallel_for(int64_t n, int threads,
                  const std::function<void(int64_t, int64_t, int)>& body) {
    if (n <= 0) return;
    if (threads <= 1 || n == 1) {
        body(0, n, 0);
        return;
    }
    threads = int(std::min<int64_t>(threads, n));
    int64_t chunk = (n + threads - 1) / threads;
    std::vector<std::thread> pool;
    pool.reserve(size_t(threads));
    for (int t = 0; t < threads; ++t) {
        int64_t begin = t * chunk;
        int64_t end = std::min<int64_t>(begin + chunk, n);
        if (begin >= end) break;
        pool.emplace_back([&body, begin, end, t] { body(begin, end, t); });
    }
    for (auto& th : pool) th.join();
}

std::array<Mat3, 4> quat_rotation_jacobian(const Quat& q) {
    double w = q.w, x = q.x, y = q.y, z = q.z;
    std::array<Mat3, 4> J;
    // dR/dw
    J[0].m[0][0] = 2 * w;  J[0].m[0][1] = -2 * z; J[0].m[0][2] = 2 * y;
    J[0].m[1][0] = 2 * z;  J[0].m[1][1] = 2 * w;  J[0].m[1][2] = -2 * x;
    J[0].m[2][0] = -2 * y; J[0].m[2][1] = 2 * x;  J[0].m[2][2] = 2 * w;
    // dR/dx
    J[1].m[0][0] = 2 * x;  J[1].m[0][1] = 2 * y;  J[1].m[0][2] = 2 * z;
    J[1].m[1][0] = 2 * y;  J[1].m[1][1] = -2 * x; J[1].m[1][2] = -2 * w;
    J[1].m[2][0] = 2 * z;  J[1].m[2][1] = 2 * w;  J[1].m[2][2] = -2 * x;
    // dR/dy
    J[2].m[0][0] = -2 * y; J[2].m[0][1] = 2 * x;  J[2].m[0][2] = 2 * w;
    J[2].m[1][0] = 2 * x;  J[2].m[1][1] = 2 * y;  J[2].m[1][2] = 2 * z;
    J[2].m[2][0] = -2 * w; J[2].m[2][1] = 2 * z;  J[2].m[2][2] = -2 * y;
    // dR/dz
    J[3].m[0][0] = -2 * z; J[3].m[0][1] = -2 * w; J[3].m[0][2] = 2 * x;
    J[3].m[1][0] = 2 * w;  J[3].m[1][1] = -2 * z; J[3].m[1][2] = 2 * y;
    J[3].m[2][0] = 2 * x;  J[3].m[2][1] = 2 * y;  J[3].m[2][2] = 2 * z;
    return J;
}

void quat_rotation_backward(const Quat& raw, const Mat3& dR, Quat& draw) {
    Quat u = raw.normalized();
    auto J = quat_rotation_jacobian(u);
    // gradient w.r.t. the unit quaternion
    double du[4];
    for (int k = 0; k < 4; ++k) {
        double s = 0.0;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) s += dR.m[i][j] * J[k].m[i][j];
        du[k] = s;
    }
    // chain through normalization: d(unit)/d(raw) = (I - u u^T) / |raw|
    double n = raw.norm();
    if (n <= 0.0) n = 1.0;
    double udotg = u.w * du[0] + u.x * du[1] + u.y * du[2] + u.z * du[3];
    draw.w += (du[0] - u.w * udotg) / n;
    draw.x += (du[1] - u.x * udotg) / n;
    draw.y += (du[2] - u.y * udotg) / n;
    draw.z += (du[3] - u.z * udotg) / n;
}

}  // namespace refsplat
