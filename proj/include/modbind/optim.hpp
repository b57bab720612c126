#pragma once

#include <cstdint>
#include <vector>

#include "modbind/matrix.hpp"

namespace modbind {

class ByteWriter;
class ByteReader;

struct AdamWConfig {
    double lr = 5e-5;
    double beta1 = 0.99;
    double beta2 = 0.98;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

// Cosine annealing with warm restarts. Period i has length t0 * t_mult^i
// steps; inside a period the rate follows the half-cosine from eta_max down
// toward eta_min, and at each period boundary it jumps back to eta_max.
struct ScheduleConfig {
    double eta_max = 5e-5;
    double eta_min = 0.0;
    uint64_t t0 = 200;
    double t_mult = 2.0;

    void validate() const;

    // The closed-form cosine value at t_cur steps into a period of t_i steps.
    static double cosine(double t_cur, double t_i, double eta_max, double eta_min);

    double lr_at(uint64_t global_step) const;
};

// AdamW with decoupled weight decay:
//   m <- b1*m + (1-b1)*g;  v <- b2*v + (1-b2)*g^2
//   theta <- theta - lr*( mhat/(sqrt(vhat)+eps) + wd*theta )
// One slot per parameter tensor; slots flagged decay=false (the temperature
// scalar) skip the decay term.
class AdamWState {
public:
    AdamWState() = default;
    AdamWState(const std::vector<const Matrix*>& params, std::vector<bool> decay_flags,
               AdamWConfig config);

    // Applies one update in place. lr overrides the config learning rate so
    // the schedule can drive it; pass cfg().lr for an unscheduled step.
    void step(const std::vector<Matrix*>& params, const std::vector<const Matrix*>& grads,
              double lr);

    uint64_t step_count() const noexcept { return step_count_; }
    const AdamWConfig& cfg() const noexcept { return config_; }
    size_t slot_count() const noexcept { return slots_.size(); }
    const Matrix& first_moment(size_t slot) const { return slots_[slot].m; }
    const Matrix& second_moment(size_t slot) const { return slots_[slot].v; }

    void serialize(ByteWriter& w) const;
    static AdamWState deserialize(ByteReader& r);

    bool operator==(const AdamWState& other) const;

private:
    struct Slot {
        Matrix m;
        Matrix v;
        bool decay = true;

        bool operator==(const Slot& other) const {
            return m == other.m && v == other.v && decay == other.decay;
        }
    };

    std::vector<Slot> slots_;
    uint64_t step_count_ = 0;
    AdamWConfig config_;
};

} // namespace modbind
