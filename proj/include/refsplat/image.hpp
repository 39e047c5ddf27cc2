#pragma once

#include <cstring>
#include <vector>

#include "refsplat/common.hpp"
#include "refsplat/vecmath.hpp"

namespace refsplat {

// Dense interleaved double image (H rows, W cols, C channels, row major).
class Image {
public:
    Image() = default;
    Image(int w, int h, int c) : w_(w), h_(h), c_(c), data_(size_t(w) * h * c, 0.0) {}

    int width() const { return w_; }
    int height() const { return h_; }
    int channels() const { return c_; }
    bool empty() const { return data_.empty(); }
    size_t pixel_count() const { return size_t(w_) * h_; }

    double& at(int x, int y, int ch = 0) { return data_[(size_t(y) * w_ + x) * c_ + ch]; }
    double at(int x, int y, int ch = 0) const { return data_[(size_t(y) * w_ + x) * c_ + ch]; }

    Vec3 rgb(int x, int y) const {
        size_t i = (size_t(y) * w_ + x) * c_;
        return {data_[i], data_[i + 1], data_[i + 2]};
    }
    void set_rgb(int x, int y, Vec3 v) {
        size_t i = (size_t(y) * w_ + x) * c_;
        data_[i] = v.x;
        data_[i + 1] = v.y;
        data_[i + 2] = v.z;
    }
    void add_rgb(int x, int y, Vec3 v) {
        size_t i = (size_t(y) * w_ + x) * c_;
        data_[i] += v.x;
        data_[i + 1] += v.y;
        data_[i + 2] += v.z;
    }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

    bool same_shape(const Image& o) const {
        return w_ == o.w_ && h_ == o.h_ && c_ == o.c_;
    }
    bool all_finite() const {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

private:
    int w_ = 0, h_ = 0, c_ = 0;
    std::vector<double> data_;
};

}  // namespace refsplat
