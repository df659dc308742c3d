#pragma once

#include <cstdint>
#include <vector>

#include "sor/model.hpp"
#include "sor/tensor.hpp"

namespace sor {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-7;
};

/// First/second moment buffers for one parameter tensor.
struct AdamState {
    nn::Tensor m;
    nn::Tensor v;
};

/// Bias-corrected Adam update, step index t >= 1:
///   m <- b1*m + (1-b1)*g;  v <- b2*v + (1-b2)*g^2
///   theta -= lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)
void adam_step(nn::Tensor& value, const nn::Tensor& grad, AdamState& state,
               const AdamConfig& cfg, long long t);

/// theta <- theta - lr * g. lr must be positive.
void sgd_step(nn::Tensor& value, const nn::Tensor& grad, double lr);

/// Stepwise-constant decay: lr(e) = initial_lr * decay_factor^floor(e / decay_every).
struct LrSchedule {
    double initial_lr = 0.1;
    double decay_factor = 0.1;
    int decay_every = 35;
};

double lr_at(const LrSchedule& schedule, int epoch);

/// Applies per-parameter updates to a model's trainable parameters from the
/// gradients accumulated in Param::grad. Frozen layers are never touched and
/// hold no optimizer state. Moment buffers are keyed by position in the
/// trainable parameter list, so the freeze pattern must not change while an
/// optimizer is in use.
class Optimizer {
public:
    enum class Kind { adam, sgd };

    static Optimizer adam(AdamConfig cfg = {});
    static Optimizer sgd(double lr);

    /// One update step. For SGD, lr_override > 0 replaces the stored rate
    /// (scheduled training); Adam always uses its configured rate.
    void step(nn::Model& model, double lr_override = -1.0);

    Kind kind() const { return kind_; }
    long long step_count() const { return steps_; }
    /// Learning rate the next step would use (schedule overrides aside).
    double base_lr() const;

private:
    explicit Optimizer(Kind k) : kind_(k) {}

    Kind kind_;
    AdamConfig adam_cfg_;
    double sgd_lr_ = 0.0;
    long long steps_ = 0;
    std::vector<AdamState> slots_;
};

}  // namespace sor
