#include "sor/experiment.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "sor/csvfmt.hpp"
#include "sor/errors.hpp"
#include "sor/optim.hpp"
#include "sor/rng.hpp"

namespace sor {

namespace {

using ordered_json = nlohmann::ordered_json;

constexpr char kResultsHeader[] =
    "filters,lambda1,lambda2,noise_ub,train_size,seed,batch_size,threshold,"
    "accuracy,reduced_fraction,wall_ms";
constexpr char kSummaryHeader[] =
    "filters,lambda1,noise_ub,train_size,n_seeds,acc_mean,acc_std,red_mean,red_std";

std::string meta_double(double v) { return fmt_double(v); }

double meta_to_double(const nn::Model& m, const std::string& key) {
    const auto it = m.meta.find(key);
    if (it == m.meta.end()) throw ValidationError("model metadata is missing '" + key + "'");
    return parse_double(it->second);
}

std::uint64_t meta_to_u64(const nn::Model& m, const std::string& key) {
    const auto it = m.meta.find(key);
    if (it == m.meta.end()) throw ValidationError("model metadata is missing '" + key + "'");
    try {
        return std::stoull(it->second);
    } catch (const std::exception&) {
        throw ValidationError("model metadata '" + key + "' is not an integer: " + it->second);
    }
}

/// Sample mean and standard deviation (n-1 denominator; 0 when n < 2).
void mean_std(const std::vector<double>& xs, double& mean, double& std_out) {
    const std::size_t n = xs.size();
    double sum = 0.0;
    for (double x : xs) sum += x;
    mean = n > 0 ? sum / static_cast<double>(n) : 0.0;
    if (n < 2) {
        std_out = 0.0;
        return;
    }
    double sq = 0.0;
    for (double x : xs) sq += (x - mean) * (x - mean);
    std_out = std::sqrt(sq / static_cast<double>(n - 1));
}

}  // namespace

void RunParams::validate() const {
    if (filters < 1) throw ValidationError("filters must be >= 1");
    if (!(noise_ub > 0.0)) throw ValidationError("noise_ub must be positive");
    if (train_size < 1) throw ValidationError("train_size must be >= 1");
    if (test_size < 1) throw ValidationError("test_size must be >= 1");
    if (epochs_stage1 < 0 || epochs_stage2 < 0) throw ValidationError("epochs must be >= 0");
    if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
    if (!(threshold > 0.0)) throw ValidationError("threshold must be positive");
}

void ExperimentConfig::validate() const {
    if (filters.empty() || noise_ubs.empty() || train_sizes.empty() || lambda1s.empty())
        throw ValidationError("every grid dimension needs at least one value");
    if (n_seeds < 1) throw ValidationError("n_seeds must be >= 1");
    if (lambda2_ratio < 0.0) throw ValidationError("lambda2_ratio must be >= 0");
    RunParams p;
    p.test_size = test_size;
    p.epochs_stage1 = epochs_stage1;
    p.epochs_stage2 = epochs_stage2;
    p.batch_size = batch_size;
    p.threshold = threshold;
    for (int f : filters) {
        p.filters = f;
        for (double nu : noise_ubs) {
            p.noise_ub = nu;
            for (int ts : train_sizes) {
                p.train_size = ts;
                p.validate();
            }
        }
    }
    for (double l : lambda1s)
        if (l < 0.0) throw ValidationError("lambda1 must be >= 0");
}

std::string ExperimentConfig::to_json() const {
    ordered_json j;
    j["filters"] = filters;
    j["noise_ubs"] = noise_ubs;
    j["train_sizes"] = train_sizes;
    j["lambda1s"] = lambda1s;
    j["lambda2_ratio"] = lambda2_ratio;
    j["n_seeds"] = n_seeds;
    j["master_seed"] = master_seed;
    j["test_size"] = test_size;
    j["epochs_stage1"] = epochs_stage1;
    j["epochs_stage2"] = epochs_stage2;
    j["batch_size"] = batch_size;
    j["threshold"] = threshold;
    j["penalty_mode"] = penalty_mode_name(penalty_mode);
    j["timing"] = timing;
    return j.dump(1, '\t') + "\n";
}

ExperimentConfig ExperimentConfig::from_json_text(const std::string& text) {
    ordered_json j;
    try {
        j = ordered_json::parse(text);
    } catch (const ordered_json::parse_error& e) {
        throw ParseError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ParseError("config root must be a JSON object");

    ExperimentConfig cfg;
    try {
        for (const auto& [key, value] : j.items()) {
            if (key == "filters") cfg.filters = value.get<std::vector<int>>();
            else if (key == "noise_ubs") cfg.noise_ubs = value.get<std::vector<double>>();
            else if (key == "train_sizes") cfg.train_sizes = value.get<std::vector<int>>();
            else if (key == "lambda1s") cfg.lambda1s = value.get<std::vector<double>>();
            else if (key == "lambda2_ratio") cfg.lambda2_ratio = value.get<double>();
            else if (key == "n_seeds") cfg.n_seeds = value.get<int>();
            else if (key == "master_seed") cfg.master_seed = value.get<std::uint64_t>();
            else if (key == "test_size") cfg.test_size = value.get<int>();
            else if (key == "epochs_stage1") cfg.epochs_stage1 = value.get<int>();
            else if (key == "epochs_stage2") cfg.epochs_stage2 = value.get<int>();
            else if (key == "batch_size") cfg.batch_size = value.get<int>();
            else if (key == "threshold") cfg.threshold = value.get<double>();
            else if (key == "penalty_mode")
                cfg.penalty_mode = penalty_mode_from_name(value.get<std::string>());
            else if (key == "timing") cfg.timing = value.get<bool>();
            else throw ValidationError("unknown config key '" + key + "'");
        }
    } catch (const ordered_json::exception& e) {
        throw ParseError(std::string("config field has the wrong type: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

ExperimentConfig ExperimentConfig::from_json_file(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw ValidationError("cannot open config file: " + path.string());
    std::stringstream ss;
    ss << is.rdbuf();
    return from_json_text(ss.str());
}

std::uint64_t run_substream(std::uint64_t run_seed, RunStream which) {
    return Xoshiro256::substream(run_seed, static_cast<std::uint64_t>(which));
}

nn::Model build_toy_model(int filters) {
    if (filters < 1) throw ValidationError("filters must be >= 1");
    nn::Model m({data::kImageSide, data::kImageSide, 1});
    m.add_conv2d(3, 3, filters);
    m.add_maxpool2d(2, 2);
    m.add_conv2d(3, 3, filters);
    m.add_gap();
    m.add_dense(1, nn::Activation::sigmoid);
    return m;
}

BaselineResult run_baseline(const RunParams& p, std::uint64_t run_seed) {
    p.validate();

    const data::Dataset train_raw =
        data::generate(p.train_size, p.noise_ub, run_substream(run_seed, RunStream::train_data));
    const data::Standardizer stdz = data::fit_standardizer(train_raw);
    const data::Dataset train_set = data::apply_standardizer(stdz, train_raw);

    BaselineResult out{build_toy_model(p.filters), TrainingHistory{}, stdz, 0.0};
    Xoshiro256 init_rng(run_substream(run_seed, RunStream::init));
    out.model.init_params(init_rng);

    Optimizer opt = Optimizer::adam();
    TrainConfig tc;
    tc.epochs = p.epochs_stage1;
    tc.batch_size = p.batch_size;
    tc.shuffle_seed = run_substream(run_seed, RunStream::stage1_shuffle);
    out.history = train(out.model, nullptr, nullptr, train_set, opt, nullptr, tc);

    const data::Dataset test_raw =
        data::generate(p.test_size, p.noise_ub, run_substream(run_seed, RunStream::test_data));
    const data::Dataset test = data::apply_standardizer(stdz, test_raw);
    out.test_accuracy = evaluate(out.model, test).accuracy;

    out.model.meta["stage"] = "baseline";
    out.model.meta["filters"] = std::to_string(p.filters);
    out.model.meta["noise_ub"] = meta_double(p.noise_ub);
    out.model.meta["train_size"] = std::to_string(p.train_size);
    out.model.meta["run_seed"] = std::to_string(run_seed);
    out.model.meta["standardizer_mean"] = meta_double(stdz.mean);
    out.model.meta["standardizer_std"] = meta_double(stdz.stddev);
    return out;
}

SorResult run_sor_stage(const nn::Model& baseline, const RunParams& p, double lambda1,
                        double lambda2, std::uint64_t run_seed) {
    p.validate();
    if (lambda1 < 0.0 || lambda2 < 0.0) throw ValidationError("lambdas must be >= 0");

    const auto stage = baseline.meta.find("stage");
    if (stage == baseline.meta.end() || stage->second != "baseline")
        throw ValidationError("model is not a baseline (meta stage missing or wrong)");
    const int meta_filters = static_cast<int>(meta_to_u64(baseline, "filters"));
    if (meta_filters != p.filters)
        throw ValidationError("model was trained with " + std::to_string(meta_filters) +
                              " filters but the run asks for " + std::to_string(p.filters));
    if (meta_to_double(baseline, "noise_ub") != p.noise_ub ||
        static_cast<int>(meta_to_u64(baseline, "train_size")) != p.train_size)
        throw ValidationError("model data parameters do not match the run configuration");
    if (meta_to_u64(baseline, "run_seed") != run_seed)
        throw ValidationError("model was produced under a different run seed");

    data::Standardizer stdz;
    stdz.mean = meta_to_double(baseline, "standardizer_mean");
    stdz.stddev = meta_to_double(baseline, "standardizer_std");

    const data::Dataset train_raw =
        data::generate(p.train_size, p.noise_ub, run_substream(run_seed, RunStream::train_data));
    const data::Dataset train_set = data::apply_standardizer(stdz, train_raw);

    SorResult out{baseline, BlockPartition{}, GateSet{}, ObjectiveConfig{}, TrainingHistory{},
                  0.0, 0.0};
    out.part = define_blocks(out.model, {2, 2, 1});
    freeze_blocks(out.model, out.part, 2);
    out.gates = insert_gates(out.model, out.part);
    out.objective = make_objective_config(out.model, out.part, out.gates, lambda1, lambda2);

    Optimizer opt = Optimizer::sgd(0.1);
    const LrSchedule schedule;  // 0.1, x0.1 every 35 epochs
    TrainConfig tc;
    tc.epochs = p.epochs_stage2;
    // The penalized stage runs full-batch: the shrink applied per epoch is then
    // exactly lr*lambda, independent of train size. Mini-batches multiply the
    // per-epoch shrink by steps-per-epoch, which over-prunes mid-range lambdas.
    tc.batch_size = p.train_size;
    tc.shuffle_seed = run_substream(run_seed, RunStream::stage2_shuffle);
    tc.penalty_mode = p.penalty_mode;
    out.history = train(out.model, &out.gates, &out.objective, train_set, opt, &schedule, tc);

    const data::Dataset test_raw =
        data::generate(p.test_size, p.noise_ub, run_substream(run_seed, RunStream::test_data));
    const data::Dataset test = data::apply_standardizer(stdz, test_raw);
    out.test_accuracy = evaluate(out.model, test).accuracy;
    out.reduced_fraction = removed_fraction(out.model, out.gates, out.objective, p.threshold);

    out.model.meta["stage"] = "sor";
    out.model.meta["lambda1"] = meta_double(lambda1);
    out.model.meta["lambda2"] = meta_double(lambda2);
    out.model.meta["threshold"] = meta_double(p.threshold);
    return out;
}

RunRecord run_cell(const RunParams& p, double lambda1, double lambda2, std::uint64_t seed,
                   bool timing) {
    RunRecord rec;
    rec.filters = p.filters;
    rec.lambda1 = lambda1;
    rec.lambda2 = lambda2;
    rec.noise_ub = p.noise_ub;
    rec.train_size = p.train_size;
    rec.seed = seed;
    rec.batch_size = p.batch_size;
    rec.threshold = p.threshold;

    const auto t0 = std::chrono::steady_clock::now();
    try {
        const BaselineResult base = run_baseline(p, seed);
        const SorResult sor = run_sor_stage(base.model, p, lambda1, lambda2, seed);
        rec.accuracy = sor.test_accuracy;
        rec.reduced_fraction = sor.reduced_fraction;
    } catch (const std::exception& e) {
        rec.error = e.what();
        rec.accuracy = std::nan("");
        rec.reduced_fraction = std::nan("");
    }
    if (timing) {
        const auto t1 = std::chrono::steady_clock::now();
        rec.wall_ms =
            std::chrono::duration_cast<std::chrono::duration<double, std::milli>>(t1 - t0)
                .count();
    }
    return rec;
}

std::vector<GridCell> enumerate_cells(const ExperimentConfig& cfg) {
    cfg.validate();
    std::vector<GridCell> cells;
    for (int f : cfg.filters)
        for (double nu : cfg.noise_ubs)
            for (int ts : cfg.train_sizes)
                for (double l1 : cfg.lambda1s) cells.push_back(GridCell{f, nu, ts, l1});
    return cells;
}

std::vector<RunRecord> run_grid(const ExperimentConfig& cfg, std::ostream* progress) {
    const std::vector<GridCell> cells = enumerate_cells(cfg);
    std::vector<RunRecord> records;
    records.reserve(cells.size() * static_cast<std::size_t>(cfg.n_seeds));

    for (std::size_t ci = 0; ci < cells.size(); ++ci) {
        const GridCell& cell = cells[ci];
        RunParams p;
        p.filters = cell.filters;
        p.noise_ub = cell.noise_ub;
        p.train_size = cell.train_size;
        p.test_size = cfg.test_size;
        p.epochs_stage1 = cfg.epochs_stage1;
        p.epochs_stage2 = cfg.epochs_stage2;
        p.batch_size = cfg.batch_size;
        p.threshold = cfg.threshold;
        p.penalty_mode = cfg.penalty_mode;

        for (int si = 0; si < cfg.n_seeds; ++si) {
            const std::uint64_t run_seed = mix_seed(
                {cfg.master_seed, static_cast<std::uint64_t>(ci), static_cast<std::uint64_t>(si)});
            RunRecord rec = run_cell(p, cell.lambda1, cfg.lambda2_ratio * cell.lambda1, run_seed,
                                     cfg.timing);
            if (progress != nullptr) {
                (*progress) << "cell " << ci + 1 << "/" << cells.size() << " seed " << si + 1
                            << "/" << cfg.n_seeds;
                if (rec.failed()) (*progress) << "  FAILED: " << rec.error;
                else
                    (*progress) << "  acc=" << rec.accuracy
                                << " reduced=" << rec.reduced_fraction;
                (*progress) << "\n" << std::flush;
            }
            records.push_back(std::move(rec));
        }
    }
    return records;
}

std::string results_csv(const std::vector<RunRecord>& records) {
    std::string out = kResultsHeader;
    out += '\n';
    for (const RunRecord& r : records) {
        out += std::to_string(r.filters);
        out += ',';
        out += fmt_double(r.lambda1);
        out += ',';
        out += fmt_double(r.lambda2);
        out += ',';
        out += fmt_double(r.noise_ub);
        out += ',';
        out += std::to_string(r.train_size);
        out += ',';
        out += std::to_string(r.seed);
        out += ',';
        out += std::to_string(r.batch_size);
        out += ',';
        out += fmt_double(r.threshold);
        out += ',';
        out += fmt_double(r.accuracy);
        out += ',';
        out += fmt_double(r.reduced_fraction);
        out += ',';
        out += fmt_double(r.wall_ms);
        out += '\n';
    }
    return out;
}

std::string summary_csv(const std::vector<RunRecord>& records) {
    struct Key {
        int filters;
        double lambda1;
        double noise_ub;
        int train_size;
        bool operator==(const Key&) const = default;
    };
    std::vector<Key> order;
    std::vector<std::vector<double>> accs, reds;

    for (const RunRecord& r : records) {
        if (r.failed() || std::isnan(r.accuracy)) continue;
        const Key k{r.filters, r.lambda1, r.noise_ub, r.train_size};
        std::size_t pos = order.size();
        for (std::size_t i = 0; i < order.size(); ++i)
            if (order[i] == k) {
                pos = i;
                break;
            }
        if (pos == order.size()) {
            order.push_back(k);
            accs.emplace_back();
            reds.emplace_back();
        }
        accs[pos].push_back(r.accuracy);
        reds[pos].push_back(r.reduced_fraction);
    }

    std::string out = kSummaryHeader;
    out += '\n';
    for (std::size_t i = 0; i < order.size(); ++i) {
        double am, as, rm, rs;
        mean_std(accs[i], am, as);
        mean_std(reds[i], rm, rs);
        out += std::to_string(order[i].filters);
        out += ',';
        out += fmt_double(order[i].lambda1);
        out += ',';
        out += fmt_double(order[i].noise_ub);
        out += ',';
        out += std::to_string(order[i].train_size);
        out += ',';
        out += std::to_string(accs[i].size());
        out += ',';
        out += fmt_double(am);
        out += ',';
        out += fmt_double(as);
        out += ',';
        out += fmt_double(rm);
        out += ',';
        out += fmt_double(rs);
        out += '\n';
    }
    return out;
}

std::vector<RunRecord> load_results_csv(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw ValidationError("cannot open results file: " + path.string());
    std::string line;
    if (!std::getline(is, line)) throw ParseError("results file is empty");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != kResultsHeader)
        throw ParseError("results file has an unexpected header: " + line);

    std::vector<RunRecord> records;
    int lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::stringstream ss(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() != 11)
            throw ParseError("results row " + std::to_string(lineno) + " has " +
                             std::to_string(cells.size()) + " columns, expected 11");
        RunRecord r;
        try {
            r.filters = std::stoi(cells[0]);
            r.lambda1 = parse_double(cells[1]);
            r.lambda2 = parse_double(cells[2]);
            r.noise_ub = parse_double(cells[3]);
            r.train_size = std::stoi(cells[4]);
            r.seed = std::stoull(cells[5]);
            r.batch_size = std::stoi(cells[6]);
            r.threshold = parse_double(cells[7]);
            r.accuracy = parse_double(cells[8]);
            r.reduced_fraction = parse_double(cells[9]);
            r.wall_ms = parse_double(cells[10]);
        } catch (const std::exception&) {
            throw ParseError("results row " + std::to_string(lineno) + " is malformed");
        }
        records.push_back(r);
    }
    return records;
}

void write_text_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream os(path, std::ios::binary);  // binary: no newline translation
    if (!os) throw ValidationError("cannot open for writing: " + path.string());
    os << content;
    if (!os) throw ValidationError("write failed: " + path.string());
}

}  // namespace sor
