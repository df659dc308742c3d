#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "sor/blocks.hpp"
#include "sor/errors.hpp"
#include "sor/gates.hpp"
#include "sor/loss.hpp"
#include "sor/model.hpp"
#include "sor/noisebox.hpp"
#include "sor/optim.hpp"
#include "sor/penalty.hpp"
#include "sor/rng.hpp"
#include "sor/trainer.hpp"

using namespace sor;
using namespace sor::nn;

namespace {

Model toy_model(int filters, std::uint64_t seed = 40) {
    Model m({32, 32, 1});
    m.add_conv2d(3, 3, filters);
    m.add_maxpool2d(2, 2);
    m.add_conv2d(3, 3, filters);
    m.add_gap();
    m.add_dense(1, Activation::sigmoid);
    Xoshiro256 rng(seed);
    m.init_params(rng);
    return m;
}

struct Setup {
    Model model;
    BlockPartition part;
    GateSet gates;
};

Setup gated_setup(int filters, std::uint64_t seed = 40) {
    Setup s{toy_model(filters, seed), {}, {}};
    s.part = define_blocks(s.model, {2, 2, 1});
    freeze_blocks(s.model, s.part, 2);
    s.gates = insert_gates(s.model, s.part);
    return s;
}

data::Dataset small_data(int n, double noise_ub, std::uint64_t seed) {
    const data::Dataset raw = data::generate(n, noise_ub, seed);
    return data::apply_standardizer(data::fit_standardizer(raw), raw);
}

std::vector<double> all_values(Model& m) {
    std::vector<double> out;
    for (Param* p : m.all_params())
        for (double v : p->value.raw()) out.push_back(v);
    return out;
}

}  // namespace

TEST_CASE("zero epochs returns an empty history and leaves the model untouched") {
    Model m = toy_model(3);
    const std::vector<double> before = all_values(m);
    const data::Dataset ds = small_data(6, 0.1, 1);
    Optimizer opt = Optimizer::adam();
    const TrainingHistory h = train(m, nullptr, nullptr, ds, opt, nullptr, {0, 32, 0});
    CHECK(h.epochs.empty());
    CHECK(all_values(m) == before);
    CHECK_THROWS_AS(h.back(), ValidationError);
}

TEST_CASE("training rejects invalid setups") {
    Model m = toy_model(3);
    const data::Dataset ds = small_data(6, 0.1, 1);
    Optimizer opt = Optimizer::adam();

    data::Dataset empty;
    CHECK_THROWS_AS(train(m, nullptr, nullptr, empty, opt, nullptr, {1, 32, 0}),
                    ValidationError);
    CHECK_THROWS_AS(train(m, nullptr, nullptr, ds, opt, nullptr, {1, 0, 0}), ValidationError);
    CHECK_THROWS_AS(train(m, nullptr, nullptr, ds, opt, nullptr, {-1, 32, 0}), ValidationError);

    Model frozen = toy_model(3);
    for (std::size_t i = 0; i < frozen.num_layers(); ++i) frozen.layer(i).frozen = true;
    CHECK_THROWS_AS(train(frozen, nullptr, nullptr, ds, opt, nullptr, {1, 32, 0}),
                    ValidationError);

    ObjectiveConfig cfg;
    cfg.lambda1 = 0.1;
    cfg.omega_new = {0};
    CHECK_THROWS_AS(train(m, nullptr, &cfg, ds, opt, nullptr, {1, 32, 0}), ValidationError);
}

TEST_CASE("one epoch equals a hand-rolled reference loop, cache included") {
    const data::Dataset ds = small_data(6, 0.1, 9);
    const std::uint64_t shuffle_seed = 17;
    const int batch = 3;

    Setup s = gated_setup(3);
    Model ref = s.model;  // same weights, same freeze pattern

    Optimizer opt = Optimizer::sgd(0.1);
    const TrainingHistory h = train(s.model, nullptr, nullptr, ds, opt, nullptr,
                                    {1, batch, shuffle_seed});
    REQUIRE(h.epochs.size() == 1);

    // Reference: same shuffle stream, full forward (no activation cache),
    // same batch split, plain sgd_step on every trainable parameter.
    std::vector<int> order(6);
    std::iota(order.begin(), order.end(), 0);
    Xoshiro256 rng(shuffle_seed);
    for (int i = 5; i > 0; --i) {
        const std::uint64_t j = rng.below(static_cast<std::uint64_t>(i) + 1);
        std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
    }
    const std::size_t lowest = ref.lowest_trainable_layer();
    for (int start = 0; start < 6; start += batch) {
        const int b = std::min(batch, 6 - start);
        ref.zero_grads();
        for (int k = 0; k < b; ++k) {
            const int idx = order[static_cast<std::size_t>(start + k)];
            const Tensor pred = ref.forward(ds.image(idx));
            Tensor label({1});
            label[0] = ds.labels[static_cast<std::size_t>(idx)];
            Tensor grad = bce_loss_grad(pred, label);
            grad[0] /= static_cast<double>(b);
            ref.backward(grad, lowest);
        }
        for (Param* p : ref.trainable_params()) sgd_step(p->value, p->grad, 0.1);
    }

    CHECK(all_values(s.model) == all_values(ref));
}

TEST_CASE("training is bitwise deterministic") {
    const data::Dataset ds = small_data(10, 0.1, 3);
    Setup a = gated_setup(3);
    Setup b = gated_setup(3);
    ObjectiveConfig ca = make_objective_config(a.model, a.part, a.gates, 0.5, 0.05);
    ObjectiveConfig cb = make_objective_config(b.model, b.part, b.gates, 0.5, 0.05);

    Optimizer oa = Optimizer::sgd(0.1);
    Optimizer ob = Optimizer::sgd(0.1);
    const LrSchedule sched;
    const TrainingHistory ha = train(a.model, &a.gates, &ca, ds, oa, &sched, {8, 4, 77});
    const TrainingHistory hb = train(b.model, &b.gates, &cb, ds, ob, &sched, {8, 4, 77});

    CHECK(all_values(a.model) == all_values(b.model));
    CHECK(ha.to_csv() == hb.to_csv());
}

TEST_CASE("a gated model with frozen unit gates trains exactly like the ungated one") {
    const data::Dataset ds = small_data(12, 0.1, 21);

    Model ungated = toy_model(3);
    BlockPartition upart = define_blocks(ungated, {2, 2, 1});
    freeze_blocks(ungated, upart, 2);

    Setup g = gated_setup(3);
    g.gates.layer(g.model, 0).frozen = true;  // pin the betas at exactly 1

    Optimizer ou = Optimizer::adam();
    Optimizer og = Optimizer::adam();
    const TrainingHistory hu = train(ungated, nullptr, nullptr, ds, ou, nullptr, {5, 4, 13});
    const TrainingHistory hg = train(g.model, nullptr, nullptr, ds, og, nullptr, {5, 4, 13});

    CHECK(std::abs(hu.back().data_loss - hg.back().data_loss) < 1e-9);

    auto up = ungated.trainable_params();
    auto gp = g.model.trainable_params();
    REQUIRE(up.size() == gp.size());
    for (std::size_t i = 0; i < up.size(); ++i) CHECK(up[i]->value == gp[i]->value);
}

TEST_CASE("frozen layers are bit-identical after training") {
    const data::Dataset ds = small_data(8, 0.1, 4);
    Setup s = gated_setup(3);
    ObjectiveConfig cfg = make_objective_config(s.model, s.part, s.gates, 0.05, 0.005);

    std::vector<double> frozen_before;
    for (std::size_t i = 0; i < s.model.num_layers(); ++i)
        if (s.model.layer(i).frozen)
            for (Param* p : s.model.layer(i).params())
                for (double v : p->value.raw()) frozen_before.push_back(v);

    Optimizer opt = Optimizer::sgd(0.1);
    const LrSchedule sched;
    train(s.model, &s.gates, &cfg, ds, opt, &sched, {6, 4, 5});

    std::vector<double> frozen_after;
    for (std::size_t i = 0; i < s.model.num_layers(); ++i)
        if (s.model.layer(i).frozen)
            for (Param* p : s.model.layer(i).params())
                for (double v : p->value.raw()) frozen_after.push_back(v);
    CHECK(frozen_before == frozen_after);
}

TEST_CASE("proximal updates reach exact zeros under a heavy penalty") {
    const data::Dataset ds = small_data(12, 0.1, 30);
    Setup s = gated_setup(3);
    ObjectiveConfig cfg = make_objective_config(s.model, s.part, s.gates, 5.0, 5.0);

    Optimizer opt = Optimizer::sgd(0.1);
    const LrSchedule sched;
    TrainConfig tc{10, 12, 99, PenaltyMode::proximal};
    train(s.model, &s.gates, &cfg, ds, opt, &sched, tc);

    const GateLayer& gate = s.gates.layer(s.model, 0);
    for (std::size_t j = 0; j < gate.beta.value.size(); ++j)
        CHECK(gate.beta.value[j] == 0.0);
    for (const WeightGroup& g : cfg.groups) {
        for (std::size_t idx : g.weight_indices) {
            const Param* w = nullptr;
            for (Param* p : s.model.layer(g.layer_index).params())
                if (p->name == "weights") w = p;
            REQUIRE(w != nullptr);
            CHECK(w->value[idx] == 0.0);
        }
    }
}

TEST_CASE("subgradient updates hover near zero without reaching it") {
    const data::Dataset ds = small_data(12, 0.1, 30);
    Setup s = gated_setup(3);
    ObjectiveConfig cfg = make_objective_config(s.model, s.part, s.gates, 5.0, 5.0);

    Optimizer opt = Optimizer::sgd(0.1);
    const LrSchedule sched;
    TrainConfig tc{10, 12, 99, PenaltyMode::subgradient};
    train(s.model, &s.gates, &cfg, ds, opt, &sched, tc);

    const GateLayer& gate = s.gates.layer(s.model, 0);
    double min_abs = 1e300, max_abs = 0.0;
    for (std::size_t j = 0; j < gate.beta.value.size(); ++j) {
        CHECK(gate.beta.value[j] != 0.0);
        min_abs = std::min(min_abs, std::abs(gate.beta.value[j]));
        max_abs = std::max(max_abs, std::abs(gate.beta.value[j]));
    }
    // The penalty has clearly pulled the betas off their initial 1.0.
    CHECK(max_abs < 1.0);
    (void)min_abs;
}

TEST_CASE("penalty mode names round trip and reject junk") {
    CHECK(penalty_mode_from_name("proximal") == PenaltyMode::proximal);
    CHECK(penalty_mode_from_name("subgradient") == PenaltyMode::subgradient);
    CHECK(std::string(penalty_mode_name(PenaltyMode::proximal)) == "proximal");
    CHECK(std::string(penalty_mode_name(PenaltyMode::subgradient)) == "subgradient");
    CHECK_THROWS_AS(penalty_mode_from_name("prox"), ValidationError);
}

TEST_CASE("plain training separates low-noise data") {
    const data::Dataset ds = small_data(40, 0.1, 8);
    Model m = toy_model(3, 88);
    Optimizer opt = Optimizer::adam();
    const TrainingHistory h = train(m, nullptr, nullptr, ds, opt, nullptr, {50, 32, 12});

    CHECK(h.back().train_acc >= 0.9);
    const EvalResult ev = evaluate(m, ds);
    CHECK(ev.accuracy >= 0.9);
    CHECK(h.epochs.size() == 50);
}

TEST_CASE("first-epoch stats describe the pre-update model when one batch covers the data") {
    const data::Dataset ds = small_data(10, 0.1, 14);
    Model m = toy_model(3, 15);
    Model before = m;

    Optimizer opt = Optimizer::sgd(0.1);
    const TrainingHistory h = train(m, nullptr, nullptr, ds, opt, nullptr, {1, 10, 6});

    const EvalResult ev = evaluate(before, ds);
    CHECK(h.back().data_loss == doctest::Approx(ev.loss).epsilon(1e-12));
    CHECK(h.back().train_acc == ev.accuracy);
    CHECK(h.back().psi == h.back().data_loss);
}

TEST_CASE("history records the schedule for sgd and the fixed rate for adam") {
    const data::Dataset ds = small_data(6, 0.1, 2);

    Setup s = gated_setup(3);
    Optimizer sgd = Optimizer::sgd(0.1);
    LrSchedule sched;
    sched.decay_every = 3;
    const TrainingHistory hs = train(s.model, nullptr, nullptr, ds, sgd, &sched, {7, 6, 1});
    for (int e = 0; e < 7; ++e) CHECK(hs.epochs[static_cast<std::size_t>(e)].lr == lr_at(sched, e));
    CHECK(hs.epochs[0].lr == 0.1);
    CHECK(hs.epochs[3].lr == doctest::Approx(0.01).epsilon(1e-12));

    Model m = toy_model(3);
    Optimizer adam = Optimizer::adam();
    const TrainingHistory ha = train(m, nullptr, nullptr, ds, adam, &sched, {2, 6, 1});
    CHECK(ha.epochs[0].lr == 0.001);
    CHECK(ha.epochs[1].lr == 0.001);
}

TEST_CASE("history penalty columns match recomputation on the final parameters") {
    const data::Dataset ds = small_data(8, 0.1, 44);
    Setup s = gated_setup(3);
    ObjectiveConfig cfg = make_objective_config(s.model, s.part, s.gates, 0.5, 0.05);

    Optimizer opt = Optimizer::sgd(0.1);
    const LrSchedule sched;
    const TrainingHistory h = train(s.model, &s.gates, &cfg, ds, opt, &sched, {4, 4, 3});

    const EpochStats& last = h.back();
    CHECK(last.l1_penalty == l1_penalty(s.model, s.gates, cfg.lambda1));
    CHECK(last.gl_penalty == group_lasso_penalty(s.model, cfg.groups, cfg.lambda2));
    CHECK(last.psi == last.data_loss + last.l1_penalty + last.gl_penalty);
}

TEST_CASE("history csv has one row per epoch and the documented header") {
    const data::Dataset ds = small_data(5, 0.1, 2);
    Model m = toy_model(3);
    Optimizer opt = Optimizer::adam();
    const TrainingHistory h = train(m, nullptr, nullptr, ds, opt, nullptr, {3, 5, 0});

    std::stringstream ss(h.to_csv());
    std::string line;
    std::getline(ss, line);
    CHECK(line == "epoch,data_loss,l1_penalty,gl_penalty,psi,train_acc,lr");
    int rows = 0;
    while (std::getline(ss, line)) {
        CHECK(line.rfind(std::to_string(rows) + ",", 0) == 0);
        ++rows;
    }
    CHECK(rows == 3);
}

TEST_CASE("oversized batches are clamped to the dataset") {
    const data::Dataset ds = small_data(8, 0.1, 5);
    Model m = toy_model(3);
    Optimizer opt = Optimizer::adam();
    const TrainingHistory h = train(m, nullptr, nullptr, ds, opt, nullptr, {2, 9999, 1});
    CHECK(h.epochs.size() == 2);
    CHECK(std::isfinite(h.back().data_loss));
}

TEST_CASE("evaluate matches a manual forward pass") {
    const data::Dataset ds = small_data(6, 0.1, 61);
    Model m = toy_model(3, 62);

    Tensor preds({6});
    Tensor labels({6});
    for (int i = 0; i < 6; ++i) {
        preds[static_cast<std::size_t>(i)] = m.forward(ds.image(i))[0];
        labels[static_cast<std::size_t>(i)] = ds.labels[static_cast<std::size_t>(i)];
    }

    const EvalResult ev = evaluate(m, ds);
    CHECK(ev.loss == bce_loss(preds, labels));
    CHECK(ev.accuracy == binary_accuracy(preds, labels));

    data::Dataset empty;
    CHECK_THROWS_AS(evaluate(m, empty), ValidationError);
}
