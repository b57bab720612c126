#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "modbind/errors.hpp"

namespace modbind {

// Central-difference gradient estimate, (f(x+h*e_i) - f(x-h*e_i)) / (2h).
// Verification oracle: evaluates f pointwise only and shares no code with
// the tape's backward pass.
inline std::vector<double> finite_diff_grad(
    const std::function<double(const std::vector<double>&)>& f,
    std::vector<double> x, double h) {
    if (!(h > 0.0)) {
        throw ContractError("finite_diff_grad: step must be positive, got " +
                            std::to_string(h));
    }
    std::vector<double> grad(x.size(), 0.0);
    for (size_t i = 0; i < x.size(); ++i) {
        const double saved = x[i];
        x[i] = saved + h;
        const double fp = f(x);
        x[i] = saved - h;
        const double fm = f(x);
        x[i] = saved;
        if (!std::isfinite(fp) || !std::isfinite(fm)) {
            throw NumericError("finite_diff_grad: non-finite value at coordinate " +
                               std::to_string(i));
        }
        grad[i] = (fp - fm) / (2.0 * h);
    }
    return grad;
}

} // namespace modbind
