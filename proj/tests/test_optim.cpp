#include <cmath>
#include <vector>

#include "doctest.h"
#include "sor/errors.hpp"
#include "sor/loss.hpp"
#include "sor/model.hpp"
#include "sor/optim.hpp"
#include "sor/rng.hpp"
#include "sor/tensor.hpp"
#include "testutil.hpp"

using namespace sor;
using namespace sor::nn;

namespace {

Model two_dense_model(std::uint64_t seed = 91) {
    Model m({4});
    m.add_dense(3, Activation::sigmoid);
    m.add_dense(1, Activation::sigmoid);
    Xoshiro256 rng(seed);
    m.init_params(rng);
    return m;
}

void fill_grads(Model& m, std::uint64_t seed) {
    Xoshiro256 rng(seed);
    for (Param* p : m.all_params())
        for (double& g : p->grad.raw()) g = rng.uniform(-1.0, 1.0);
}

}  // namespace

TEST_CASE("sgd subtracts lr times gradient, hand case") {
    Tensor v({1});
    v[0] = 1.0;
    Tensor g({1});
    g[0] = 0.5;
    sgd_step(v, g, 0.1);
    CHECK(v[0] == 1.0 - 0.1 * 0.5);
    CHECK(v[0] == 0.95);
}

TEST_CASE("sgd matches a scalar reference loop exactly") {
    Xoshiro256 rng(7);
    Tensor v = testutil::random_tensor({3, 4}, rng);
    Tensor g = testutil::random_tensor({3, 4}, rng);
    std::vector<double> expect(v.raw());
    const double lr = 0.037;
    for (std::size_t i = 0; i < expect.size(); ++i) expect[i] -= lr * g[i];

    sgd_step(v, g, lr);
    for (std::size_t i = 0; i < expect.size(); ++i) CHECK(v[i] == expect[i]);
}

TEST_CASE("sgd leaves values unchanged for zero gradient") {
    Xoshiro256 rng(8);
    Tensor v = testutil::random_tensor({5}, rng);
    const Tensor before = v;
    Tensor g({5});
    sgd_step(v, g, 0.1);
    CHECK(v == before);
}

TEST_CASE("sgd validates learning rate and shapes") {
    Tensor v({2});
    Tensor g({2});
    CHECK_THROWS_AS(sgd_step(v, g, 0.0), ValidationError);
    CHECK_THROWS_AS(sgd_step(v, g, -0.1), ValidationError);
    Tensor g3({3});
    CHECK_THROWS_AS(sgd_step(v, g3, 0.1), ValidationError);
}

TEST_CASE("adam first step moves by about minus lr regardless of gradient scale") {
    // Bias correction makes m-hat = g and v-hat = g*g on step one, so the
    // move is lr * g / (|g| + eps): minus-lr-sized whenever |g| >> eps.
    for (double g0 : {2.5, -1.0, 40.0}) {
        Tensor v({1});
        v[0] = 0.3;
        Tensor g({1});
        g[0] = g0;
        AdamState st;
        AdamConfig cfg;
        adam_step(v, g, st, cfg, 1);
        const double moved = v[0] - 0.3;
        const double expected = -cfg.lr * (g0 > 0 ? 1.0 : -1.0);
        CHECK(std::abs(moved - expected) < 1e-9);
    }
    // Tiny gradients still move by almost lr; the eps offset shaves a share
    // of eps / |g| off the unit step.
    Tensor v({1});
    v[0] = 0.3;
    Tensor g({1});
    g[0] = -0.003;
    AdamState st;
    adam_step(v, g, st, AdamConfig{}, 1);
    const double moved = v[0] - 0.3;
    CHECK(moved > 0.999 * 0.001);
    CHECK(moved <= 0.001);
}

TEST_CASE("adam matches an independent scalar reference over several steps") {
    const AdamConfig cfg;
    Xoshiro256 rng(11);
    Tensor v = testutil::random_tensor({6}, rng);
    std::vector<double> ref(v.raw());
    std::vector<double> m(ref.size(), 0.0), w(ref.size(), 0.0);

    AdamState st;
    for (long long t = 1; t <= 7; ++t) {
        Tensor g = testutil::random_tensor({6}, rng);
        // Reference: textbook bias-corrected update, plain scalars.
        const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
        const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
        for (std::size_t i = 0; i < ref.size(); ++i) {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            w[i] = cfg.beta2 * w[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            ref[i] -= cfg.lr * (m[i] / c1) / (std::sqrt(w[i] / c2) + cfg.eps);
        }
        adam_step(v, g, st, cfg, t);
        for (std::size_t i = 0; i < ref.size(); ++i) CHECK(v[i] == ref[i]);
    }
}

TEST_CASE("adam with zero gradient on the first step changes nothing") {
    Tensor v({3});
    v[0] = 1.0;
    v[1] = -2.0;
    v[2] = 0.5;
    const Tensor before = v;
    Tensor g({3});
    AdamState st;
    adam_step(v, g, st, AdamConfig{}, 1);
    CHECK(v == before);
}

TEST_CASE("adam validates step index and shapes") {
    Tensor v({2});
    Tensor g({2});
    AdamState st;
    CHECK_THROWS_AS(adam_step(v, g, st, AdamConfig{}, 0), ValidationError);

    Tensor g3({3});
    CHECK_THROWS_AS(adam_step(v, g3, st, AdamConfig{}, 1), ValidationError);

    adam_step(v, g, st, AdamConfig{}, 1);
    CHECK(st.m.same_shape(v));
    CHECK(st.v.same_shape(v));

    AdamState stale;
    stale.m = Tensor({5});
    stale.v = Tensor({5});
    CHECK_THROWS_AS(adam_step(v, g, stale, AdamConfig{}, 1), ValidationError);
}

TEST_CASE("lr schedule decays stepwise with integer epoch division") {
    const LrSchedule s;  // 0.1, factor 0.1, every 35
    CHECK(lr_at(s, 0) == 0.1);
    CHECK(lr_at(s, 1) == 0.1);
    CHECK(lr_at(s, 34) == 0.1);
    CHECK(lr_at(s, 35) == doctest::Approx(0.01).epsilon(1e-12));
    CHECK(lr_at(s, 69) == doctest::Approx(0.01).epsilon(1e-12));
    CHECK(lr_at(s, 70) == doctest::Approx(0.001).epsilon(1e-12));
    CHECK(lr_at(s, 35) == lr_at(s, 36));

    CHECK_THROWS_AS(lr_at(s, -1), ValidationError);
    LrSchedule bad;
    bad.decay_every = 0;
    CHECK_THROWS_AS(lr_at(bad, 0), ValidationError);
}

TEST_CASE("optimizer sgd steps all trainable parameters and honors overrides") {
    Model m = two_dense_model();
    Model ref = m;
    fill_grads(m, 21);
    fill_grads(ref, 21);

    Optimizer opt = Optimizer::sgd(0.5);
    opt.step(m, 0.05);  // override replaces the stored rate
    CHECK(opt.step_count() == 1);
    CHECK(opt.base_lr() == 0.5);

    auto mp = m.trainable_params();
    auto rp = ref.trainable_params();
    REQUIRE(mp.size() == rp.size());
    for (std::size_t i = 0; i < mp.size(); ++i) {
        for (std::size_t j = 0; j < mp[i]->value.size(); ++j)
            CHECK(mp[i]->value[j] == rp[i]->value[j] - 0.05 * rp[i]->grad[j]);
    }
}

TEST_CASE("optimizer adam equals direct adam_step calls in parameter order") {
    Model m = two_dense_model();
    Model ref = m;

    Optimizer opt = Optimizer::adam();
    std::vector<AdamState> states(ref.trainable_params().size());
    for (long long t = 1; t <= 3; ++t) {
        fill_grads(m, 100 + static_cast<std::uint64_t>(t));
        fill_grads(ref, 100 + static_cast<std::uint64_t>(t));
        opt.step(m);
        auto rp = ref.trainable_params();
        for (std::size_t i = 0; i < rp.size(); ++i)
            adam_step(rp[i]->value, rp[i]->grad, states[i], AdamConfig{}, t);
    }
    CHECK(opt.step_count() == 3);

    auto mp = m.trainable_params();
    auto rp = ref.trainable_params();
    for (std::size_t i = 0; i < mp.size(); ++i) CHECK(mp[i]->value == rp[i]->value);
}

TEST_CASE("optimizer never touches frozen layers") {
    Model m = two_dense_model();
    m.layer(0).frozen = true;
    const Tensor w0 = dynamic_cast<DenseLayer&>(m.layer(0)).params()[0]->value;
    fill_grads(m, 33);

    Optimizer adam = Optimizer::adam();
    adam.step(m);
    Optimizer sgd = Optimizer::sgd(0.1);
    sgd.step(m);

    CHECK(dynamic_cast<DenseLayer&>(m.layer(0)).params()[0]->value == w0);
}

TEST_CASE("optimizer constructors validate rates") {
    CHECK_THROWS_AS(Optimizer::sgd(0.0), ValidationError);
    CHECK_THROWS_AS(Optimizer::sgd(-1.0), ValidationError);
}
