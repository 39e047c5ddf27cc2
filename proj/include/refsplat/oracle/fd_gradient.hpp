#pragma once

#include <functional>
#include <vector>

#include "refsplat/common.hpp"

namespace refsplat::oracle {

/// Central finite differences of a deterministic scalar closure over a set
/// of parameter slots, in raw (activation) space. The closure must be pure:
/// evaluating it twice at the same point must give the same value, which is
/// verified before differencing.
struct FdResult {
    std::vector<double> gradient;
    bool deterministic = true;
};

FdResult fd_gradient(const std::function<double()>& loss,
                     const std::vector<double*>& params, double step);

/// Convenience for single parameters.
double fd_gradient_one(const std::function<double()>& loss, double* param, double step);

/// Relative error between analytic and reference gradients, ignoring entries
/// where both are below `dead_zone`.
double gradient_rel_error(const std::vector<double>& analytic,
                          const std::vector<double>& reference, double dead_zone = 1e-6);

}  // namespace refsplat::oracle
