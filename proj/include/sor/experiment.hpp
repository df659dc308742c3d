#pragma once

#include <cstdint>
#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "sor/blocks.hpp"
#include "sor/gates.hpp"
#include "sor/model.hpp"
#include "sor/noisebox.hpp"
#include "sor/penalty.hpp"
#include "sor/prune.hpp"
#include "sor/trainer.hpp"

namespace sor {

/// Everything one (cell, seed) run needs besides the lambdas.
struct RunParams {
    int filters = 10;
    double noise_ub = 0.1;
    int train_size = 100;
    int test_size = 1000;
    int epochs_stage1 = 100;
    int epochs_stage2 = 100;
    int batch_size = 32;
    double threshold = 1e-3;
    PenaltyMode penalty_mode = PenaltyMode::proximal;

    void validate() const;
};

/// Grid definition. Cells are enumerated filters -> noise_ub -> train_size
/// -> lambda1, nested in that order; a cell's position in that enumeration
/// seeds its runs, so reordering the lists changes the streams.
struct ExperimentConfig {
    std::vector<int> filters = {3, 10};
    std::vector<double> noise_ubs = {0.1, 1.0};
    std::vector<int> train_sizes = {10, 100, 1000};
    std::vector<double> lambda1s = {0.05, 0.5, 5.0};
    double lambda2_ratio = 0.1;
    int n_seeds = 30;
    std::uint64_t master_seed = 42;
    int test_size = 1000;
    int epochs_stage1 = 100;
    int epochs_stage2 = 100;
    int batch_size = 32;
    double threshold = 1e-3;
    PenaltyMode penalty_mode = PenaltyMode::proximal;
    bool timing = false;

    void validate() const;
    std::string to_json() const;
    static ExperimentConfig from_json_text(const std::string& text);
    static ExperimentConfig from_json_file(const std::filesystem::path& path);
};

/// One row of results.csv.
struct RunRecord {
    int filters = 0;
    double lambda1 = 0.0;
    double lambda2 = 0.0;
    double noise_ub = 0.0;
    int train_size = 0;
    std::uint64_t seed = 0;
    int batch_size = 0;
    double threshold = 0.0;
    double accuracy = 0.0;
    double reduced_fraction = 0.0;
    double wall_ms = 0.0;
    /// Set when this run threw; the numeric fields are then NaN in the CSV.
    std::string error;

    bool failed() const { return !error.empty(); }
};

/// Derived RNG streams of one run. Every consumer of randomness in a run
/// draws from its own substream so adding draws to one stage cannot shift
/// any other stage.
enum class RunStream : std::uint64_t {
    train_data = 0,
    test_data = 1,
    init = 2,
    stage1_shuffle = 3,
    stage2_shuffle = 4,
};
std::uint64_t run_substream(std::uint64_t run_seed, RunStream which);

/// The fixed two-conv architecture under study, parameters uninitialized.
nn::Model build_toy_model(int filters);

struct BaselineResult {
    nn::Model model;  // carries run provenance in meta
    TrainingHistory history;
    data::Standardizer standardizer;
    double test_accuracy = 0.0;
};

/// Stage one: generate + standardize data, initialize, train with Adam,
/// evaluate on a fresh standardized test split.
BaselineResult run_baseline(const RunParams& p, std::uint64_t run_seed);

struct SorResult {
    nn::Model model;  // gated, regularized, not pruned
    BlockPartition part;
    GateSet gates;
    ObjectiveConfig objective;
    TrainingHistory history;
    double test_accuracy = 0.0;
    double reduced_fraction = 0.0;
};

/// Stage two: freeze both conv blocks, gate the first, group-lasso the
/// dense layer by input channel, train with the step-decayed SGD schedule,
/// measure accuracy and the fraction of sub-threshold structures.
/// The baseline model must carry meta written by run_baseline; its filter
/// count and data parameters must agree with `p`.
SorResult run_sor_stage(const nn::Model& baseline, const RunParams& p, double lambda1,
                        double lambda2, std::uint64_t run_seed);

/// Full pipeline for one (cell, seed): baseline then SOR stage.
RunRecord run_cell(const RunParams& p, double lambda1, double lambda2, std::uint64_t seed,
                   bool timing);

struct GridCell {
    int filters = 0;
    double noise_ub = 0.0;
    int train_size = 0;
    double lambda1 = 0.0;
};
std::vector<GridCell> enumerate_cells(const ExperimentConfig& cfg);

/// Runs every cell for every seed index, in enumeration order. Failures do
/// not stop the sweep; they surface as rows with an error note. `progress`
/// (optional) receives one line per finished run.
std::vector<RunRecord> run_grid(const ExperimentConfig& cfg, std::ostream* progress = nullptr);

std::string results_csv(const std::vector<RunRecord>& records);
std::string summary_csv(const std::vector<RunRecord>& records);
std::vector<RunRecord> load_results_csv(const std::filesystem::path& path);

void write_text_file(const std::filesystem::path& path, const std::string& content);

}  // namespace sor
