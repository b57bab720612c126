#pragma once

#include <cmath>

#include "modbind/matrix.hpp"
#include "modbind/tape.hpp"

namespace modbind {

// Learnable softmax temperature, stored as s = log(1/tau). The log
// parameterization keeps tau positive; after every optimizer step 1/tau is
// clamped to [1, 100].
struct Temperature {
    double log_inv_tau = 0.0;

    static Temperature init(double tau = 0.07) {
        Temperature t;
        t.log_inv_tau = std::log(1.0 / tau);
        return t;
    }

    double tau() const { return std::exp(-log_inv_tau); }
    double inv_tau() const { return std::exp(log_inv_tau); }

    static constexpr double kMinLogInvTau = 0.0;               // 1/tau >= 1
    inline static const double kMaxLogInvTau = std::log(100.0); // 1/tau <= 100

    void clamp() {
        if (log_inv_tau < kMinLogInvTau) log_inv_tau = kMinLogInvTau;
        if (log_inv_tau > kMaxLogInvTau) log_inv_tau = kMaxLogInvTau;
    }
};

// Loss node plus the detached similarity logits (scaled by 1/tau) for
// diagnostics.
struct LossOutput {
    Var loss;
    Matrix logits;
};

// Directional InfoNCE over a batch of k paired rows:
//   L = (1/k) sum_i -log( exp(o_i.c_i/tau) / sum_j exp(o_i.c_j/tau) )
// Rows are L2-normalized internally before the dot products; softmax rows
// are max-subtracted. log_inv_tau is a 1x1 node (gradient flows into it).
LossOutput infonce_directional(Tape& tape, Var queries, Var targets, Var log_inv_tau);

// Symmetric InfoNCE: mean of the two directional losses with query and
// gallery roles swapped.
LossOutput infonce_symmetric(Tape& tape, Var lhs, Var rhs, Var log_inv_tau);

// Value-only conveniences over plain matrices (scratch tape inside).
double infonce_directional_value(const Matrix& queries, const Matrix& targets,
                                 const Temperature& temp);
double infonce_symmetric_value(const Matrix& lhs, const Matrix& rhs,
                               const Temperature& temp);

} // namespace modbind
