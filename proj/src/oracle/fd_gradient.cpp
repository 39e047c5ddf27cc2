#include "refsplat/oracle/fd_gradient.hpp"

#include <cmath>

namespace refsplat::oracle {

FdResult fd_gradient(const std::function<double()>& loss,
                     const std::vector<double*>& params, double step) {
    FdResult res;
    res.gradient.reserve(params.size());
    double base1 = loss();
    double base2 = loss();
    if (base1 != base2) {
        res.deterministic = false;
        return res;
    }
    for (double* p : params) {
        double saved = *p;
        *p = saved + step;
        double up = loss();
        *p = saved - step;
        double down = loss();
        *p = saved;
        res.gradient.push_back((up - down) / (2.0 * step));
    }
    return res;
}

double fd_gradient_one(const std::function<double()>& loss, double* param, double step) {
    auto r = fd_gradient(loss, {param}, step);
    if (!r.deterministic) throw NumericError("fd_gradient: closure is not deterministic");
    return r.gradient[0];
}

double gradient_rel_error(const std::vector<double>& analytic,
                          const std::vector<double>& reference, double dead_zone) {
    double worst = 0.0;
    for (size_t i = 0; i < analytic.size(); ++i) {
        double a = analytic[i], r = reference[i];
        double mag = std::max(std::abs(a), std::abs(r));
        if (mag <= dead_zone) continue;
        worst = std::max(worst, std::abs(a - r) / mag);
    }
    return worst;
}

}  // namespace refsplat::oracle
