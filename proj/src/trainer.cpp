#include "sor/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "sor/csvfmt.hpp"
#include "sor/errors.hpp"
#include "sor/loss.hpp"
#include "sor/rng.hpp"

namespace sor {

namespace {

nn::Param& weight_param_of(nn::Model& model, std::size_t layer_index) {
    for (nn::Param* p : model.layer(layer_index).params())
        if (p->name == "weights") return *p;
    throw ValidationError("layer " + std::to_string(layer_index) + " has no weight tensor");
}

double soft_threshold(double x, double t) {
    if (x > t) return x - t;
    if (x < -t) return x + t;
    return 0.0;
}

/// Shrinkage operators applied after the gradient step. Both map values the
/// penalty has fully paid for to exact 0.0.
void apply_proximal(nn::Model& model, const GateSet* gates, const ObjectiveConfig& cfg,
                    double lr) {
    if (gates != nullptr && cfg.lambda1 > 0.0) {
        const double t = lr * cfg.lambda1;
        for (std::size_t i = 0; i < gates->entries.size(); ++i) {
            nn::GateLayer& gate = gates->layer(model, i);
            if (gate.frozen) continue;
            for (double& b : gate.beta.value.raw()) b = soft_threshold(b, t);
        }
    }
    if (cfg.lambda2 > 0.0) {
        for (const WeightGroup& g : cfg.groups) {
            if (model.layer(g.layer_index).frozen) continue;
            nn::Param& w = weight_param_of(model, g.layer_index);
            double sq = 0.0;
            for (std::size_t idx : g.weight_indices) sq += w.value[idx] * w.value[idx];
            const double norm = std::sqrt(sq);
            if (norm <= cfg.group_eps) {
                for (std::size_t idx : g.weight_indices) w.value[idx] = 0.0;
                continue;
            }
            const double scale = std::max(0.0, 1.0 - lr * cfg.lambda2 / norm);
            for (std::size_t idx : g.weight_indices) w.value[idx] *= scale;
        }
    }
}

}  // namespace

const char* penalty_mode_name(PenaltyMode mode) {
    return mode == PenaltyMode::proximal ? "proximal" : "subgradient";
}

PenaltyMode penalty_mode_from_name(const std::string& name) {
    if (name == "proximal") return PenaltyMode::proximal;
    if (name == "subgradient") return PenaltyMode::subgradient;
    throw ValidationError("unknown penalty mode '" + name +
                          "' (expected 'proximal' or 'subgradient')");
}

std::string TrainingHistory::to_csv() const {
    std::string out = "epoch,data_loss,l1_penalty,gl_penalty,psi,train_acc,lr\n";
    for (const EpochStats& e : epochs) {
        out += std::to_string(e.epoch);
        out += ',';
        out += fmt_double(e.data_loss);
        out += ',';
        out += fmt_double(e.l1_penalty);
        out += ',';
        out += fmt_double(e.gl_penalty);
        out += ',';
        out += fmt_double(e.psi);
        out += ',';
        out += fmt_double(e.train_acc);
        out += ',';
        out += fmt_double(e.lr);
        out += '\n';
    }
    return out;
}

void TrainingHistory::save_csv(const std::filesystem::path& path) const {
    std::ofstream os(path);
    if (!os) throw ValidationError("cannot open for writing: " + path.string());
    os << to_csv();
    if (!os) throw ValidationError("write failed: " + path.string());
}

const EpochStats& TrainingHistory::back() const {
    if (epochs.empty()) throw ValidationError("training history is empty");
    return epochs.back();
}

TrainingHistory train(nn::Model& model, const GateSet* gates, const ObjectiveConfig* objective,
                      const data::Dataset& dataset, Optimizer& opt, const LrSchedule* schedule,
                      const TrainConfig& cfg) {
    const int n = dataset.size();
    if (n < 1) throw ValidationError("cannot train on an empty dataset");
    if (cfg.batch_size < 1) throw ValidationError("batch size must be >= 1");
    if (cfg.epochs < 0) throw ValidationError("epoch count must be >= 0");
    if (model.trainable_params().empty())
        throw ValidationError("model has no trainable parameters");
    if (objective != nullptr) objective->validate();
    if (objective != nullptr && !objective->omega_new.empty() && gates == nullptr)
        throw ValidationError("objective penalizes gates but no gate set was given");

    TrainingHistory history;
    if (cfg.epochs == 0) return history;

    const int batch_size = std::min(cfg.batch_size, n);
    const std::size_t cache_lo = model.lowest_trainable_layer();

    // The layers below cache_lo never change during this run, so each
    // sample's activation at that depth is computed once.
    std::vector<nn::Tensor> inputs;
    inputs.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        nn::Tensor img = dataset.image(i);
        inputs.push_back(cache_lo == 0 ? std::move(img)
                                       : model.forward_range(img, 0, cache_lo));
    }

    const std::size_t n_layers = model.num_layers();
    const bool use_schedule = schedule != nullptr && opt.kind() == Optimizer::Kind::sgd;
    const bool subgradient = objective != nullptr && cfg.penalty_mode == PenaltyMode::subgradient;
    const bool proximal = objective != nullptr && cfg.penalty_mode == PenaltyMode::proximal;

    Xoshiro256 shuffle_rng(cfg.shuffle_seed);
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr = use_schedule ? lr_at(*schedule, epoch) : opt.base_lr();

        // Fisher-Yates with the run's own stream; one draw per position.
        for (int i = n - 1; i > 0; --i) {
            const std::uint64_t j = shuffle_rng.below(static_cast<std::uint64_t>(i) + 1);
            std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
        }

        double loss_sum = 0.0;
        int correct = 0;

        for (int start = 0; start < n; start += batch_size) {
            const int b = std::min(batch_size, n - start);
            model.zero_grads();

            for (int k = 0; k < b; ++k) {
                const int idx = order[static_cast<std::size_t>(start + k)];
                const nn::Tensor pred =
                    model.forward_range(inputs[static_cast<std::size_t>(idx)], cache_lo, n_layers);
                nn::Tensor label({1});
                label[0] = dataset.labels[static_cast<std::size_t>(idx)];

                loss_sum += nn::bce_loss(pred, label);
                if ((pred[0] >= 0.5 ? 1.0 : 0.0) == label[0]) ++correct;

                nn::Tensor grad = nn::bce_loss_grad(pred, label);
                for (double& g : grad.raw()) g /= static_cast<double>(b);
                model.backward(grad, cache_lo);
            }

            if (subgradient) {
                static const GateSet kNoGates;
                add_penalty_subgradients(model, gates != nullptr ? *gates : kNoGates, *objective);
            }
            opt.step(model, use_schedule ? lr : -1.0);
            if (proximal) apply_proximal(model, gates, *objective, lr);
        }

        EpochStats stats;
        stats.epoch = epoch;
        stats.data_loss = loss_sum / static_cast<double>(n);
        stats.train_acc = static_cast<double>(correct) / static_cast<double>(n);
        stats.lr = lr;
        if (objective != nullptr) {
            stats.l1_penalty =
                gates != nullptr ? l1_penalty(model, *gates, objective->lambda1) : 0.0;
            stats.gl_penalty = group_lasso_penalty(model, objective->groups, objective->lambda2);
        }
        stats.psi = stats.data_loss + stats.l1_penalty + stats.gl_penalty;
        history.epochs.push_back(stats);
    }
    return history;
}

EvalResult evaluate(nn::Model& model, const data::Dataset& dataset) {
    const int n = dataset.size();
    if (n < 1) throw ValidationError("cannot evaluate on an empty dataset");

    nn::Tensor preds({n});
    nn::Tensor labels({n});
    for (int i = 0; i < n; ++i) {
        const nn::Tensor img = dataset.image(i);
        preds[static_cast<std::size_t>(i)] = model.forward(img)[0];
        labels[static_cast<std::size_t>(i)] = dataset.labels[static_cast<std::size_t>(i)];
    }
    return EvalResult{nn::bce_loss(preds, labels), nn::binary_accuracy(preds, labels)};
}

}  // namespace sor
