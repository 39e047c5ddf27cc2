#pragma once

#include <array>
#include <cmath>
#include <limits>

namespace refsplat {

struct Vec2 {
    double x = 0.0, y = 0.0;

    Vec2() = default;
    Vec2(double x_, double y_) : x(x_), y(y_) {}

    Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
    Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
    Vec2 operator*(double s) const { return {x * s, y * s}; }
    Vec2 operator/(double s) const { return {x / s, y / s}; }
    Vec2& operator+=(Vec2 o) { x += o.x; y += o.y; return *this; }

    double dot(Vec2 o) const { return x * o.x + y * o.y; }
    double norm() const { return std::sqrt(x * x + y * y); }
};

struct Vec3 {
    double x = 0.0, y = 0.0, z = 0.0;

    Vec3() = default;
    Vec3(double x_, double y_, double z_) : x(x_), y(y_), z(z_) {}
    static Vec3 all(double v) { return {v, v, v}; }

    double& operator[](int i) { return (&x)[i]; }
    double operator[](int i) const { return (&x)[i]; }

    Vec3 operator+(Vec3 o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(Vec3 o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator-() const { return {-x, -y, -z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }
    Vec3& operator+=(Vec3 o) { x += o.x; y += o.y; z += o.z; return *this; }
    Vec3& operator-=(Vec3 o) { x -= o.x; y -= o.y; z -= o.z; return *this; }
    Vec3& operator*=(double s) { x *= s; y *= s; z *= s; return *this; }

    // component-wise product
    Vec3 cwise(Vec3 o) const { return {x * o.x, y * o.y, z * o.z}; }

    double dot(Vec3 o) const { return x * o.x + y * o.y + z * o.z; }
    Vec3 cross(Vec3 o) const {
        return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
    }
    double norm2() const { return x * x + y * y + z * z; }
    double norm() const { return std::sqrt(norm2()); }
    Vec3 normalized() const {
        double n = norm();
        return n > 0.0 ? (*this) / n : Vec3{0.0, 0.0, 0.0};
    }
    double max_component() const { return x > y ? (x > z ? x : z) : (y > z ? y : z); }
    double min_component() const { return x < y ? (x < z ? x : z) : (y < z ? y : z); }
    bool finite() const { return std::isfinite(x) && std::isfinite(y) && std::isfinite(z); }
};

inline Vec3 operator*(double s, Vec3 v) { return v * s; }

struct Vec4 {
    double x = 0.0, y = 0.0, z = 0.0, w = 0.0;

    Vec4() = default;
    Vec4(double x_, double y_, double z_, double w_) : x(x_), y(y_), z(z_), w(w_) {}

    double& operator[](int i) { return (&x)[i]; }
    double operator[](int i) const { return (&x)[i]; }

    Vec4 operator+(Vec4 o) const { return {x + o.x, y + o.y, z + o.z, w + o.w}; }
    Vec4 operator*(double s) const { return {x * s, y * s, z * s, w * s}; }
    double dot(Vec4 o) const { return x * o.x + y * o.y + z * o.z + w * o.w; }
    double norm() const { return std::sqrt(dot(*this)); }
};

// 2x2 symmetric-friendly matrix, row major
struct Mat2 {
    double m[2][2] = {{0, 0}, {0, 0}};

    static Mat2 identity() {
        Mat2 r;
        r.m[0][0] = r.m[1][1] = 1.0;
        return r;
    }
    double det() const { return m[0][0] * m[1][1] - m[0][1] * m[1][0]; }
    Mat2 inverse() const {
        double d = det();
        Mat2 r;
        r.m[0][0] = m[1][1] / d;
        r.m[0][1] = -m[0][1] / d;
        r.m[1][0] = -m[1][0] / d;
        r.m[1][1] = m[0][0] / d;
        return r;
    }
    Vec2 mul(Vec2 v) const {
        return {m[0][0] * v.x + m[0][1] * v.y, m[1][0] * v.x + m[1][1] * v.y};
    }
};

// 3x3 matrix, row major
struct Mat3 {
    double m[3][3] = {{0, 0, 0}, {0, 0, 0}, {0, 0, 0}};

    static Mat3 identity() {
        Mat3 r;
        r.m[0][0] = r.m[1][1] = r.m[2][2] = 1.0;
        return r;
    }
    static Mat3 from_cols(Vec3 c0, Vec3 c1, Vec3 c2) {
        Mat3 r;
        for (int i = 0; i < 3; ++i) {
            r.m[i][0] = c0[i];
            r.m[i][1] = c1[i];
            r.m[i][2] = c2[i];
        }
        return r;
    }
    static Mat3 diag(Vec3 d) {
        Mat3 r;
        r.m[0][0] = d.x;
        r.m[1][1] = d.y;
        r.m[2][2] = d.z;
        return r;
    }
    static Mat3 outer(Vec3 a, Vec3 b) {
        Mat3 r;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) r.m[i][j] = a[i] * b[j];
        return r;
    }

    Vec3 row(int i) const { return {m[i][0], m[i][1], m[i][2]}; }
    Vec3 col(int j) const { return {m[0][j], m[1][j], m[2][j]}; }

    Vec3 mul(Vec3 v) const {
        return {row(0).dot(v), row(1).dot(v), row(2).dot(v)};
    }
    // transpose(this) * v
    Vec3 tmul(Vec3 v) const {
        return {col(0).dot(v), col(1).dot(v), col(2).dot(v)};
    }
    Mat3 mul(const Mat3& o) const {
        Mat3 r;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                r.m[i][j] = m[i][0] * o.m[0][j] + m[i][1] * o.m[1][j] + m[i][2] * o.m[2][j];
        return r;
    }
    Mat3 transposed() const {
        Mat3 r;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) r.m[i][j] = m[j][i];
        return r;
    }
    Mat3 operator+(const Mat3& o) const {
        Mat3 r;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) r.m[i][j] = m[i][j] + o.m[i][j];
        return r;
    }
    Mat3 operator*(double s) const {
        Mat3 r;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) r.m[i][j] = m[i][j] * s;
        return r;
    }
    double det() const {
        return m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
               m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
               m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    }
};

// 4x4 homogeneous transform, row major
struct Mat4 {
    double m[4][4] = {{0, 0, 0, 0}, {0, 0, 0, 0}, {0, 0, 0, 0}, {0, 0, 0, 0}};

    static Mat4 identity() {
        Mat4 r;
        for (int i = 0; i < 4; ++i) r.m[i][i] = 1.0;
        return r;
    }
    Vec4 mul(Vec4 v) const {
        Vec4 r;
        for (int i = 0; i < 4; ++i)
            r[i] = m[i][0] * v.x + m[i][1] * v.y + m[i][2] * v.z + m[i][3] * v.w;
        return r;
    }
    Mat4 mul(const Mat4& o) const {
        Mat4 r;
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j) {
                double s = 0.0;
                for (int k = 0; k < 4; ++k) s += m[i][k] * o.m[k][j];
                r.m[i][j] = s;
            }
        return r;
    }
};

// Unit quaternion (w, x, y, z); rotation matrices are built from the
// normalized value so raw optimizer storage needs no constraint.
struct Quat {
    double w = 1.0, x = 0.0, y = 0.0, z = 0.0;

    Quat() = default;
    Quat(double w_, double x_, double y_, double z_) : w(w_), x(x_), y(y_), z(z_) {}

    double& operator[](int i) { return (&w)[i]; }
    double operator[](int i) const { return (&w)[i]; }

    double norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }
    Quat normalized() const {
        double n = norm();
        if (n <= 0.0) return Quat{1, 0, 0, 0};
        return Quat{w / n, x / n, y / n, z / n};
    }

    // rotation matrix of the normalized quaternion
    Mat3 to_matrix() const {
        Quat q = normalized();
        Mat3 r;
        double ww = q.w * q.w, xx = q.x * q.x, yy = q.y * q.y, zz = q.z * q.z;
        r.m[0][0] = ww + xx - yy - zz;
        r.m[0][1] = 2 * (q.x * q.y - q.w * q.z);
        r.m[0][2] = 2 * (q.x * q.z + q.w * q.y);
        r.m[1][0] = 2 * (q.x * q.y + q.w * q.z);
        r.m[1][1] = ww - xx + yy - zz;
        r.m[1][2] = 2 * (q.y * q.z - q.w * q.x);
        r.m[2][0] = 2 * (q.x * q.z - q.w * q.y);
        r.m[2][1] = 2 * (q.y * q.z + q.w * q.x);
        r.m[2][2] = ww - xx - yy + zz;
        return r;
    }

    static Quat from_axis_angle(Vec3 axis, double angle) {
        Vec3 a = axis.normalized();
        double s = std::sin(0.5 * angle);
        return Quat{std::cos(0.5 * angle), a.x * s, a.y * s, a.z * s};
    }
};

// d(R)/d(q_k) for the UNIT quaternion entries, before normalization chain.
// Caller composes with the normalization Jacobian (see quat_rotation_backward).
std::array<Mat3, 4> quat_rotation_jacobian(const Quat& unit_q);

// Accumulates dL/draw_quat given dL/dR for R = raw.normalized().to_matrix().
void quat_rotation_backward(const Quat& raw, const Mat3& dR, Quat& draw);

struct AABB {
    Vec3 lo{std::numeric_limits<double>::max(), std::numeric_limits<double>::max(),
            std::numeric_limits<double>::max()};
    Vec3 hi{-std::numeric_limits<double>::max(), -std::numeric_limits<double>::max(),
            -std::numeric_limits<double>::max()};

    void grow(Vec3 p) {
        for (int i = 0; i < 3; ++i) {
            if (p[i] < lo[i]) lo[i] = p[i];
            if (p[i] > hi[i]) hi[i] = p[i];
        }
    }
    void grow(const AABB& b) {
        grow(b.lo);
        grow(b.hi);
    }
    bool valid() const { return lo.x <= hi.x && lo.y <= hi.y && lo.z <= hi.z; }
    Vec3 extent() const { return hi - lo; }
    Vec3 center() const { return (lo + hi) * 0.5; }
    double surface_area() const {
        if (!valid()) return 0.0;
        Vec3 e = extent();
        return 2.0 * (e.x * e.y + e.y * e.z + e.z * e.x);
    }
    bool contains(const AABB& b, double slack = 0.0) const {
        for (int i = 0; i < 3; ++i) {
            if (b.lo[i] < lo[i] - slack || b.hi[i] > hi[i] + slack) return false;
        }
        return true;
    }
};

}  // namespace refsplat
