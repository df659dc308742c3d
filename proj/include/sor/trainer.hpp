#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sor/gates.hpp"
#include "sor/model.hpp"
#include "sor/noisebox.hpp"
#include "sor/optim.hpp"
#include "sor/penalty.hpp"

namespace sor {

/// How the sparsity terms enter the update.
///
/// `proximal` takes the data-gradient step first, then applies the closed
/// form shrinkage operators (soft-threshold on gate multipliers, group-wise
/// norm shrinkage on grouped weights). Parameters the penalty kills become
/// exactly zero and stay representable as zero.
///
/// `subgradient` folds sign/direction terms into the gradient buffers before
/// the step. Simpler, but parameters then hover near zero without ever
/// reaching it, which starves threshold-based pruning.
enum class PenaltyMode { proximal, subgradient };

const char* penalty_mode_name(PenaltyMode mode);
PenaltyMode penalty_mode_from_name(const std::string& name);

struct TrainConfig {
    int epochs = 100;
    int batch_size = 32;
    std::uint64_t shuffle_seed = 0;
    PenaltyMode penalty_mode = PenaltyMode::proximal;
};

/// Per-epoch training log row. Loss and accuracy are running means over the
/// batches of the epoch (measured on each batch before its update); the
/// penalty terms are evaluated once on the post-epoch parameters.
struct EpochStats {
    int epoch = 0;
    double data_loss = 0.0;
    double l1_penalty = 0.0;
    double gl_penalty = 0.0;
    double psi = 0.0;
    double train_acc = 0.0;
    double lr = 0.0;
};

struct TrainingHistory {
    std::vector<EpochStats> epochs;

    std::string to_csv() const;
    void save_csv(const std::filesystem::path& path) const;
    const EpochStats& back() const;
};

/// Minibatch training loop.
///
/// `gates` and `objective` may both be null (plain training, psi == data
/// loss). When given, the penalties are applied per `cfg.penalty_mode` and
/// only ever touch trainable layers. `schedule` is honored for SGD only;
/// null means the optimizer's own rate. Shuffling is seeded per run and the
/// last short batch is kept. Activations below the lowest trainable layer
/// are computed once per sample and reused every epoch.
TrainingHistory train(nn::Model& model, const GateSet* gates, const ObjectiveConfig* objective,
                      const data::Dataset& dataset, Optimizer& opt, const LrSchedule* schedule,
                      const TrainConfig& cfg);

/// Mean BCE and accuracy of `model` on `dataset`, no parameter updates.
struct EvalResult {
    double loss = 0.0;
    double accuracy = 0.0;
};
EvalResult evaluate(nn::Model& model, const data::Dataset& dataset);

}  // namespace sor
