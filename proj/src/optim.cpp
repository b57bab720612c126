#include "modbind/optim.hpp"

#include <cmath>
#include <string>

#include "modbind/errors.hpp"
#include "modbind/io_util.hpp"

namespace modbind {

void ScheduleConfig::validate() const {
    if (t0 < 1) throw ConfigError("schedule: t0 must be >= 1");
    if (t_mult < 1.0) throw ConfigError("schedule: t_mult must be >= 1");
    if (eta_min > eta_max) throw ConfigError("schedule: eta_min exceeds eta_max");
    if (!(eta_max >= 0.0)) throw ConfigError("schedule: eta_max must be >= 0");
}

double ScheduleConfig::cosine(double t_cur, double t_i, double eta_max, double eta_min) {
    return eta_min + 0.5 * (eta_max - eta_min) * (1.0 + std::cos(M_PI * t_cur / t_i));
}

double ScheduleConfig::lr_at(uint64_t global_step) const {
    validate();
    double t_cur = static_cast<double>(global_step);
    double t_i = static_cast<double>(t0);
    while (t_cur >= t_i) {
        t_cur -= t_i;
        t_i *= t_mult;
    }
    return cosine(t_cur, t_i, eta_max, eta_min);
}

AdamWState::AdamWState(const std::vector<const Matrix*>& params, std::vector<bool> decay_flags,
                       AdamWConfig config)
    : config_(config) {
    if (params.size() != decay_flags.size()) {
        throw ContractError("optimizer: decay flag count does not match parameter count");
    }
    slots_.reserve(params.size());
    for (size_t i = 0; i < params.size(); ++i) {
        Slot s;
        s.m = Matrix(params[i]->rows(), params[i]->cols());
        s.v = Matrix(params[i]->rows(), params[i]->cols());
        s.decay = decay_flags[i];
        slots_.push_back(std::move(s));
    }
}

void AdamWState::step(const std::vector<Matrix*>& params,
                      const std::vector<const Matrix*>& grads, double lr) {
    if (params.size() != slots_.size() || grads.size() != slots_.size()) {
        throw DimensionError("adamw_step: expected " + std::to_string(slots_.size()) +
                             " parameter tensors, got " + std::to_string(params.size()) +
                             " params / " + std::to_string(grads.size()) + " grads");
    }
    ++step_count_;
    const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_count_));
    const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_count_));
    for (size_t i = 0; i < slots_.size(); ++i) {
        Slot& s = slots_[i];
        Matrix& theta = *params[i];
        const Matrix& g = *grads[i];
        if (!theta.same_shape(s.m) || !g.same_shape(s.m)) {
            throw DimensionError("adamw_step: slot " + std::to_string(i) +
                                 " shape mismatch: param " + shape_string(theta) +
                                 ", grad " + shape_string(g) + ", state " +
                                 shape_string(s.m));
        }
        const double wd = s.decay ? config_.weight_decay : 0.0;
        for (size_t j = 0; j < theta.data().size(); ++j) {
            const double gj = g.data()[j];
            double& mj = s.m.data()[j];
            double& vj = s.v.data()[j];
            mj = config_.beta1 * mj + (1.0 - config_.beta1) * gj;
            vj = config_.beta2 * vj + (1.0 - config_.beta2) * gj * gj;
            const double mhat = mj / bc1;
            const double vhat = vj / bc2;
            theta.data()[j] -= lr * (mhat / (std::sqrt(vhat) + config_.eps) +
                                     wd * theta.data()[j]);
        }
        theta.ensure_finite("adamw_step");
    }
}

void AdamWState::serialize(ByteWriter& w) const {
    w.f64(config_.lr);
    w.f64(config_.beta1);
    w.f64(config_.beta2);
    w.f64(config_.eps);
    w.f64(config_.weight_decay);
    w.u64(step_count_);
    w.u32(static_cast<uint32_t>(slots_.size()));
    for (const Slot& s : slots_) {
        w.u32(static_cast<uint32_t>(s.m.rows()));
        w.u32(static_cast<uint32_t>(s.m.cols()));
        w.u8(s.decay ? 1 : 0);
        w.matrix_f64(s.m);
        w.matrix_f64(s.v);
    }
}

AdamWState AdamWState::deserialize(ByteReader& r) {
    AdamWState st;
    st.config_.lr = r.f64();
    st.config_.beta1 = r.f64();
    st.config_.beta2 = r.f64();
    st.config_.eps = r.f64();
    st.config_.weight_decay = r.f64();
    st.step_count_ = r.u64();
    const uint32_t n = r.u32();
    if (n > 4096) r.fail("implausible optimizer slot count " + std::to_string(n));
    for (uint32_t i = 0; i < n; ++i) {
        const uint32_t rows = r.u32();
        const uint32_t cols = r.u32();
        if (static_cast<uint64_t>(rows) * cols > (1ULL << 31)) {
            r.fail("implausible optimizer slot size");
        }
        Slot s;
        s.decay = r.u8() != 0;
        s.m = r.matrix_f64(rows, cols);
        s.v = r.matrix_f64(rows, cols);
        st.slots_.push_back(std::move(s));
    }
    return st;
}

bool AdamWState::operator==(const AdamWState& other) const {
    return slots_ == other.slots_ && step_count_ == other.step_count_ &&
           config_.lr == other.config_.lr && config_.beta1 == other.config_.beta1 &&
           config_.beta2 == other.config_.beta2 && config_.eps == other.config_.eps &&
           config_.weight_decay == other.config_.weight_decay;
}

} // namespace modbind
