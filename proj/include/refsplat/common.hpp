#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace refsplat {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 2.0 * kPi;

// Exit-code-bearing error categories used by the CLI (2/3/4).
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline double clamp01(double x) { return x < 0.0 ? 0.0 : (x > 1.0 ? 1.0 : x); }

inline double clampd(double x, double lo, double hi) {
    return x < lo ? lo : (x > hi ? hi : x);
}

inline double sqr(double x) { return x * x; }

// --- activations ------------------------------------------------------------

inline double sigmoid(double x) {
    return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

inline double sigmoid_deriv(double x) {
    double s = sigmoid(x);
    return s * (1.0 - s);
}

// inverse sigmoid; input clamped into the open interval
inline double logit(double y, double eps = 1e-7) {
    y = clampd(y, eps, 1.0 - eps);
    return std::log(y / (1.0 - y));
}

inline double softplus(double x) {
    return x > 30.0 ? x : std::log1p(std::exp(x));
}

inline double softplus_deriv(double x) { return sigmoid(x); }

inline double softplus_inverse(double y, double eps = 1e-9) {
    y = y < eps ? eps : y;
    return y > 30.0 ? y : std::log(std::expm1(y));
}

// --- threading --------------------------------------------------------------

// Blocked parallel loop. threads <= 1 runs inline. Worker `tid` is stable so
// callers can keep per-thread scratch and merge it in tid order afterwards.
void parallel_for(int64_t n, int threads,
                  const std::function<void(int64_t begin, int64_t end, int tid)>& body);

int hardware_threads();

}  // namespace refsplat
