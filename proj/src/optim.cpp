#include "sor/optim.hpp"

#include <cmath>

#include "sor/errors.hpp"

namespace sor {

void adam_step(nn::Tensor& value, const nn::Tensor& grad, AdamState& state,
               const AdamConfig& cfg, long long t) {
    if (!value.same_shape(grad))
        throw ValidationError("adam_step: gradient shape does not match parameter");
    if (t < 1) throw ValidationError("adam_step: step index starts at 1");
    if (state.m.size() == 0) {
        state.m = nn::Tensor(value.shape());
        state.v = nn::Tensor(value.shape());
    }
    if (!state.m.same_shape(value))
        throw ValidationError("adam_step: moment buffer shape mismatch");

    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < value.size(); ++i) {
        const double g = grad[i];
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
        const double mhat = state.m[i] / c1;
        const double vhat = state.v[i] / c2;
        value[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
}

void sgd_step(nn::Tensor& value, const nn::Tensor& grad, double lr) {
    if (lr <= 0.0) throw ValidationError("sgd_step: learning rate must be positive");
    if (!value.same_shape(grad))
        throw ValidationError("sgd_step: gradient shape does not match parameter");
    for (std::size_t i = 0; i < value.size(); ++i) value[i] -= lr * grad[i];
}

double lr_at(const LrSchedule& schedule, int epoch) {
    if (epoch < 0) throw ValidationError("lr_at: epoch must be non-negative");
    if (schedule.decay_every < 1) throw ValidationError("lr_at: decay_every must be >= 1");
    return schedule.initial_lr *
           std::pow(schedule.decay_factor, static_cast<double>(epoch / schedule.decay_every));
}

Optimizer Optimizer::adam(AdamConfig cfg) {
    Optimizer opt(Kind::adam);
    opt.adam_cfg_ = cfg;
    return opt;
}

Optimizer Optimizer::sgd(double lr) {
    if (lr <= 0.0) throw ValidationError("sgd optimizer: learning rate must be positive");
    Optimizer opt(Kind::sgd);
    opt.sgd_lr_ = lr;
    return opt;
}

double Optimizer::base_lr() const {
    return kind_ == Kind::adam ? adam_cfg_.lr : sgd_lr_;
}

void Optimizer::step(nn::Model& model, double lr_override) {
    const auto params = model.trainable_params();
    ++steps_;
    if (kind_ == Kind::adam) {
        if (slots_.size() < params.size()) slots_.resize(params.size());
        for (std::size_t i = 0; i < params.size(); ++i)
            adam_step(params[i]->value, params[i]->grad, slots_[i], adam_cfg_, steps_);
    } else {
        const double lr = lr_override > 0.0 ? lr_override : sgd_lr_;
        for (nn::Param* p : params) sgd_step(p->value, p->grad, lr);
    }
}

}  // namespace sor
