// Command-line harness for the gated-transfer experiment pipeline:
// data generation, two-stage training, pruning, equivalence checks, and
// the seeded results grid.
//
// Exit codes: 0 success, 2 validation/usage error, 3 verification failure.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "sor/csvfmt.hpp"
#include "sor/errors.hpp"
#include "sor/experiment.hpp"
#include "sor/model_io.hpp"
#include "sor/noisebox.hpp"
#include "sor/prune.hpp"
#include "sor/rng.hpp"
#include "sor/trainer.hpp"

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitVerifyFailed = 3;

/// Raised when cmd_verify finds a real mismatch (exit 3, not 2).
struct VerificationFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::filesystem::path output_dir() {
    const char* env = std::getenv("SOR_OUTPUT_DIR");
    if (env != nullptr && *env != '\0') return std::filesystem::path(env);
    return std::filesystem::path(".");
}

/// Relative output paths land in $SOR_OUTPUT_DIR (default: cwd).
std::filesystem::path resolve_output(const std::string& p) {
    const std::filesystem::path pp(p);
    if (pp.is_absolute()) return pp;
    const std::filesystem::path dir = output_dir();
    std::filesystem::create_directories(dir);
    return dir / pp;
}

std::string shape_text(const std::vector<int>& shape) {
    std::string out = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i > 0) out += ", ";
        out += std::to_string(shape[i]);
    }
    return out + "]";
}

double meta_num(const sor::nn::Model& m, const std::string& key) {
    const auto it = m.meta.find(key);
    if (it == m.meta.end())
        throw sor::ValidationError("model metadata is missing '" + key +
                                   "'; was this model produced by the baseline command?");
    return sor::parse_double(it->second);
}

std::uint64_t meta_u64(const sor::nn::Model& m, const std::string& key) {
    const auto it = m.meta.find(key);
    if (it == m.meta.end())
        throw sor::ValidationError("model metadata is missing '" + key +
                                   "'; was this model produced by the baseline command?");
    try {
        return std::stoull(it->second);
    } catch (const std::exception&) {
        throw sor::ValidationError("model metadata '" + key + "' is not an integer");
    }
}

/// Rebuilds partition/gates/groups for a saved gated model. Only the
/// canonical two-conv shape produced by the sor command is supported.
struct GatedModelView {
    sor::BlockPartition part;
    sor::GateSet gates;
    sor::ObjectiveConfig objective;
};

GatedModelView view_gated_model(sor::nn::Model& model) {
    const std::vector<std::string> expected = {"conv2d", "maxpool2d",     "gate",
                                               "conv2d", "globalavgpool", "dense"};
    bool shape_ok = model.num_layers() == expected.size();
    for (std::size_t i = 0; shape_ok && i < expected.size(); ++i)
        shape_ok = model.layer(i).kind() == expected[i];
    if (!shape_ok)
        throw sor::ValidationError(
            "expected the gated two-conv architecture (conv, pool, gate, conv, gap, dense); "
            "run the sor command first");

    // Rebuilding the partition re-marks frozen flags; keep the saved ones.
    std::vector<bool> frozen;
    for (std::size_t i = 0; i < model.num_layers(); ++i) frozen.push_back(model.layer(i).frozen);

    GatedModelView v;
    v.part = sor::define_blocks(model, {3, 2, 1});
    sor::freeze_blocks(model, v.part, 2);
    v.gates.entries.push_back({0, 2});
    v.objective = sor::make_objective_config(model, v.part, v.gates, 0.0, 0.0);

    for (std::size_t i = 0; i < model.num_layers(); ++i) model.layer(i).frozen = frozen[i];
    return v;
}

int run_app(int argc, char** argv) {
    CLI::App app{
        "Two-stage gated transfer pipeline on the noise-and-box task: train a "
        "small conv net, regularize gate and group structures to zero, prune, "
        "and sweep the seeded experiment grid.\n"
        "Relative output paths are resolved against $SOR_OUTPUT_DIR (default: "
        "current directory)."};
    app.require_subcommand(1);

    // ---- generate-data ----
    auto* gen = app.add_subcommand("generate-data", "Generate a noise-and-box dataset file");
    int gen_n = 100;
    double gen_noise = 0.1;
    std::uint64_t gen_seed = 0;
    std::string gen_out, gen_csv;
    bool gen_std = false;
    gen->add_option("--n", gen_n, "Number of images")->capture_default_str();
    gen->add_option("--noise-ub", gen_noise, "Noise upper bound")->capture_default_str();
    gen->add_option("--seed", gen_seed, "Generator seed")->capture_default_str();
    gen->add_option("--out", gen_out, "Output dataset file (binary)")->required();
    gen->add_option("--csv", gen_csv, "Also export label+pixels CSV to this path");
    gen->add_flag("--standardize", gen_std, "Standardize pixels with the set's own statistics");
    gen->callback([&]() {
        sor::data::Dataset ds = sor::data::generate(gen_n, gen_noise, gen_seed);
        if (gen_std) ds = sor::data::apply_standardizer(sor::data::fit_standardizer(ds), ds);
        const auto out_path = resolve_output(gen_out);
        sor::data::save_dataset(ds, out_path);
        if (!gen_csv.empty()) sor::data::export_csv(ds, resolve_output(gen_csv));
        std::cout << "wrote " << ds.size() << " images to " << out_path.string() << "\n";
    });

    // ---- baseline ----
    auto* base = app.add_subcommand("baseline", "Train the stage-one model from scratch");
    sor::RunParams base_p;
    std::uint64_t base_seed = 0;
    std::string base_out, base_hist;
    base->add_option("--filters", base_p.filters, "Filters per conv layer")
        ->capture_default_str();
    base->add_option("--noise-ub", base_p.noise_ub, "Noise upper bound")->capture_default_str();
    base->add_option("--train-size", base_p.train_size, "Training images")
        ->capture_default_str();
    base->add_option("--test-size", base_p.test_size, "Test images")->capture_default_str();
    base->add_option("--epochs", base_p.epochs_stage1, "Training epochs")->capture_default_str();
    base->add_option("--batch-size", base_p.batch_size, "Minibatch size")->capture_default_str();
    base->add_option("--seed", base_seed, "Run seed (drives data, init, shuffling)")
        ->capture_default_str();
    base->add_option("--out", base_out, "Output model JSON")->required();
    base->add_option("--history", base_hist, "Write per-epoch training log CSV here");
    base->callback([&]() {
        const sor::BaselineResult res = sor::run_baseline(base_p, base_seed);
        const auto out_path = resolve_output(base_out);
        sor::nn::save_model(res.model, out_path);
        if (!base_hist.empty()) res.history.save_csv(resolve_output(base_hist));
        std::cout << "baseline test_accuracy=" << sor::fmt_double(res.test_accuracy)
                  << " train_acc=" << sor::fmt_double(res.history.back().train_acc) << " -> "
                  << out_path.string() << "\n";
    });

    // ---- sor ----
    auto* stage = app.add_subcommand(
        "sor", "Gate + regularize a trained baseline (stage two), then measure");
    std::string sor_model, sor_out, sor_hist, sor_pruned_out;
    double sor_l1 = 0.0, sor_l2 = -1.0, sor_threshold = 1e-3;
    int sor_epochs = 100, sor_test_size = 1000;
    std::string sor_mode = "proximal";
    stage->add_option("--model", sor_model, "Baseline model JSON")->required();
    stage->add_option("--lambda1", sor_l1, "Gate L1 strength")->required();
    stage->add_option("--lambda2", sor_l2, "Group lasso strength (default: 0.1 * lambda1)");
    stage->add_option("--threshold", sor_threshold, "Removal threshold")->capture_default_str();
    stage->add_option("--epochs", sor_epochs, "Training epochs")->capture_default_str();
    stage->add_option("--test-size", sor_test_size, "Test images")->capture_default_str();
    stage->add_option("--penalty-mode", sor_mode, "proximal | subgradient")
        ->capture_default_str();
    stage->add_option("--out", sor_out, "Output model JSON")->required();
    stage->add_option("--history", sor_hist, "Write per-epoch training log CSV here");
    stage->add_option("--pruned-out", sor_pruned_out,
                      "Also zero+prune at the threshold and save the reduced model here");
    stage->callback([&]() {
        sor::nn::Model baseline = sor::nn::load_model(sor_model);
        sor::RunParams p;
        p.filters = static_cast<int>(meta_u64(baseline, "filters"));
        p.noise_ub = meta_num(baseline, "noise_ub");
        p.train_size = static_cast<int>(meta_u64(baseline, "train_size"));
        p.test_size = sor_test_size;
        p.epochs_stage2 = sor_epochs;
        p.threshold = sor_threshold;
        p.penalty_mode = sor::penalty_mode_from_name(sor_mode);
        const std::uint64_t run_seed = meta_u64(baseline, "run_seed");
        const double l2 = sor_l2 < 0.0 ? 0.1 * sor_l1 : sor_l2;

        sor::SorResult res = sor::run_sor_stage(baseline, p, sor_l1, l2, run_seed);
        const auto out_path = resolve_output(sor_out);
        sor::nn::save_model(res.model, out_path);
        if (!sor_hist.empty()) res.history.save_csv(resolve_output(sor_hist));
        std::cout << "sor test_accuracy=" << sor::fmt_double(res.test_accuracy)
                  << " reduced_fraction=" << sor::fmt_double(res.reduced_fraction) << " -> "
                  << out_path.string() << "\n";

        if (!sor_pruned_out.empty()) {
            sor::PruneReport report;
            sor::nn::Model pruned =
                sor::prune(res.model, res.part, res.gates, res.objective, sor_threshold, report);
            sor::nn::save_model(pruned, resolve_output(sor_pruned_out));
            std::cout << "pruned parameter_delta=" << report.parameter_delta
                      << " removed_fraction=" << sor::fmt_double(report.removed_fraction)
                      << (report.degenerate ? " (degenerate)" : "") << "\n";
        }
    });

    // ---- grid ----
    auto* grid = app.add_subcommand("grid",
                                    "Run the full (filters x noise x size x lambda) x seeds "
                                    "sweep and write results.csv + summary.csv");
    std::string grid_config;
    sor::ExperimentConfig gc;
    std::string grid_mode = "proximal";
    grid->add_option("--config", grid_config, "JSON config file; flags below override it");
    auto* of = grid->add_option("--filters", gc.filters, "Filter counts")->delimiter(',');
    auto* on = grid->add_option("--noise-ubs", gc.noise_ubs, "Noise upper bounds")
                   ->delimiter(',');
    auto* ot = grid->add_option("--train-sizes", gc.train_sizes, "Training set sizes")
                   ->delimiter(',');
    auto* ol = grid->add_option("--lambda1s", gc.lambda1s, "Gate L1 strengths")->delimiter(',');
    auto* or2 = grid->add_option("--lambda2-ratio", gc.lambda2_ratio, "lambda2 = ratio*lambda1");
    auto* os = grid->add_option("--n-seeds", gc.n_seeds, "Seeds per cell");
    auto* om = grid->add_option("--master-seed", gc.master_seed, "Master seed");
    auto* oz = grid->add_option("--test-size", gc.test_size, "Test images per run");
    auto* o1 = grid->add_option("--epochs-stage1", gc.epochs_stage1, "Baseline epochs");
    auto* o2 = grid->add_option("--epochs-stage2", gc.epochs_stage2, "Regularized epochs");
    auto* ob = grid->add_option("--batch-size", gc.batch_size, "Minibatch size");
    auto* oh = grid->add_option("--threshold", gc.threshold, "Removal threshold");
    auto* op = grid->add_option("--penalty-mode", grid_mode, "proximal | subgradient");
    auto* ow = grid->add_flag("--timing", gc.timing, "Record wall time per run (off keeps "
                                                     "results.csv byte-reproducible)");
    grid->callback([&]() {
        sor::ExperimentConfig cfg;
        if (!grid_config.empty()) cfg = sor::ExperimentConfig::from_json_file(grid_config);
        if (of->count() > 0) cfg.filters = gc.filters;
        if (on->count() > 0) cfg.noise_ubs = gc.noise_ubs;
        if (ot->count() > 0) cfg.train_sizes = gc.train_sizes;
        if (ol->count() > 0) cfg.lambda1s = gc.lambda1s;
        if (or2->count() > 0) cfg.lambda2_ratio = gc.lambda2_ratio;
        if (os->count() > 0) cfg.n_seeds = gc.n_seeds;
        if (om->count() > 0) cfg.master_seed = gc.master_seed;
        if (oz->count() > 0) cfg.test_size = gc.test_size;
        if (o1->count() > 0) cfg.epochs_stage1 = gc.epochs_stage1;
        if (o2->count() > 0) cfg.epochs_stage2 = gc.epochs_stage2;
        if (ob->count() > 0) cfg.batch_size = gc.batch_size;
        if (oh->count() > 0) cfg.threshold = gc.threshold;
        if (op->count() > 0) cfg.penalty_mode = sor::penalty_mode_from_name(grid_mode);
        if (ow->count() > 0) cfg.timing = gc.timing;
        cfg.validate();

        const std::vector<sor::RunRecord> records = sor::run_grid(cfg, &std::cerr);
        const auto results_path = resolve_output("results.csv");
        const auto summary_path = resolve_output("summary.csv");
        sor::write_text_file(results_path, sor::results_csv(records));
        sor::write_text_file(summary_path, sor::summary_csv(records));
        sor::write_text_file(resolve_output("grid_config.json"), cfg.to_json());

        int failed = 0;
        for (const auto& r : records) failed += r.failed() ? 1 : 0;
        std::cout << "wrote " << records.size() << " rows (" << failed << " failed) to "
                  << results_path.string() << "\nsummary: " << summary_path.string() << "\n";
    });

    // ---- prune ----
    auto* pr = app.add_subcommand("prune", "Zero sub-threshold structures and excise them");
    std::string pr_model, pr_out, pr_zeroed_out;
    double pr_threshold = 1e-3;
    pr->add_option("--model", pr_model, "Gated model JSON")->required();
    pr->add_option("--threshold", pr_threshold, "Removal threshold")->capture_default_str();
    pr->add_option("--out", pr_out, "Output pruned model JSON")->required();
    pr->add_option("--zeroed-out", pr_zeroed_out,
                   "Also save the zeroed-but-unpruned model here (for verify)");
    pr->callback([&]() {
        sor::nn::Model model = sor::nn::load_model(pr_model);
        GatedModelView v = view_gated_model(model);
        sor::PruneReport report;
        sor::nn::Model pruned =
            sor::prune(model, v.part, v.gates, v.objective, pr_threshold, report);
        sor::nn::save_model(pruned, resolve_output(pr_out));
        if (!pr_zeroed_out.empty()) sor::nn::save_model(model, resolve_output(pr_zeroed_out));
        std::cout << "pruned parameter_delta=" << report.parameter_delta
                  << " removed_fraction=" << sor::fmt_double(report.removed_fraction)
                  << " zeroed_gates=" << report.zeroed_gates.size()
                  << " zeroed_groups=" << report.zeroed_groups.size()
                  << (report.degenerate ? " (degenerate)" : "") << "\n";
    });

    // ---- verify ----
    auto* ver = app.add_subcommand(
        "verify", "Compare two models' outputs on random inputs; exit 3 on mismatch");
    std::string ver_a, ver_b;
    int ver_n = 100;
    double ver_tol = 0.0;
    std::uint64_t ver_seed = 2027;
    ver->add_option("--a", ver_a, "First model JSON")->required();
    ver->add_option("--b", ver_b, "Second model JSON")->required();
    ver->add_option("--n-inputs", ver_n, "Random inputs to compare")->capture_default_str();
    ver->add_option("--tol", ver_tol, "Max allowed absolute difference")
        ->capture_default_str();
    ver->add_option("--seed", ver_seed, "Input generator seed")->capture_default_str();
    ver->callback([&]() {
        sor::nn::Model a = sor::nn::load_model(ver_a);
        sor::nn::Model b = sor::nn::load_model(ver_b);
        if (ver_n < 1) throw sor::ValidationError("n-inputs must be >= 1");
        if (a.input_shape() != b.input_shape())
            throw sor::ValidationError("models take different input shapes: " +
                                       shape_text(a.input_shape()) + " vs " +
                                       shape_text(b.input_shape()));
        if (a.output_shape() != b.output_shape())
            throw sor::ValidationError("models produce different output shapes");

        sor::Xoshiro256 rng(ver_seed);
        double max_diff = 0.0;
        for (int i = 0; i < ver_n; ++i) {
            sor::nn::Tensor x(a.input_shape());
            for (double& v : x.raw()) v = rng.uniform(-2.0, 2.0);
            const sor::nn::Tensor ya = a.forward(x);
            const sor::nn::Tensor yb = b.forward(x);
            for (std::size_t j = 0; j < ya.size(); ++j)
                max_diff = std::max(max_diff, std::abs(ya[j] - yb[j]));
        }
        std::cout << "max_abs_diff=" << sor::fmt_double(max_diff) << " over " << ver_n
                  << " inputs\n";
        if (max_diff > ver_tol)
            throw VerificationFailure("outputs differ by " + sor::fmt_double(max_diff) +
                                      " (tolerance " + sor::fmt_double(ver_tol) + ")");
    });

    // ---- report ----
    auto* rep = app.add_subcommand("report", "Aggregate a results.csv into summary.csv");
    std::string rep_results, rep_out = "summary.csv";
    rep->add_option("--results", rep_results, "results.csv produced by grid")->required();
    rep->add_option("--out", rep_out, "Output summary CSV")->capture_default_str();
    rep->callback([&]() {
        const std::vector<sor::RunRecord> records = sor::load_results_csv(rep_results);
        sor::write_text_file(resolve_output(rep_out), sor::summary_csv(records));
        std::cout << "wrote " << resolve_output(rep_out).string() << "\n";
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        // Help requests exit 0; real usage errors map onto the validation code.
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitValidation;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run_app(argc, argv);
    } catch (const VerificationFailure& e) {
        std::cerr << "verification failed: " << e.what() << "\n";
        return kExitVerifyFailed;
    } catch (const sor::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    }
}
