#include <cstdio>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "sor/errors.hpp"
#include "sor/model.hpp"
#include "sor/model_io.hpp"
#include "testutil.hpp"

using namespace sor;
using namespace sor::nn;

namespace {

Model sample_model() {
    Model m({8, 8, 1});
    m.add_conv2d(3, 3, 2);
    m.add_maxpool2d(2, 2);
    m.insert_layer(2, std::make_unique<GateLayer>(2));
    m.add_conv2d(2, 2, 3);
    m.add_gap();
    m.add_dense(1, Activation::sigmoid);
    Xoshiro256 rng(2024);
    m.init_params(rng);
    m.layer(0).frozen = true;
    m.layer(2).frozen = false;
    m.meta["filters"] = "2";
    m.meta["note"] = "fixture";
    return m;
}

struct TempFile {
    std::filesystem::path path;
    explicit TempFile(const char* name)
        : path(std::filesystem::temp_directory_path() / name) {}
    ~TempFile() { std::error_code ec; std::filesystem::remove(path, ec); }
};

}  // namespace

TEST_CASE("model JSON round trip restores values bitwise") {
    Model m = sample_model();
    auto& gate = dynamic_cast<GateLayer&>(m.layer(2));
    gate.beta.value[0] = 0.1 + 0.2;  // deliberately non-representable sum
    gate.beta.value[1] = 1e-300;

    Model r = model_from_json(model_to_json(m));
    REQUIRE(r.num_layers() == m.num_layers());
    CHECK(r.input_shape() == m.input_shape());
    CHECK(r.meta == m.meta);
    for (std::size_t i = 0; i < m.num_layers(); ++i) {
        CHECK(r.layer(i).kind() == m.layer(i).kind());
        CHECK(r.layer(i).frozen == m.layer(i).frozen);
    }
    auto pm = m.all_params(), pr = r.all_params();
    REQUIRE(pm.size() == pr.size());
    for (std::size_t i = 0; i < pm.size(); ++i) CHECK(pm[i]->value == pr[i]->value);

    // Same forward output, bit for bit.
    Xoshiro256 rng(5);
    Tensor x = testutil::random_tensor({8, 8, 1}, rng);
    CHECK(m.forward(x) == r.forward(x));
}

TEST_CASE("model serialization is byte-deterministic") {
    Model m = sample_model();
    const std::string a = model_to_json(m);
    const std::string b = model_to_json(m);
    CHECK(a == b);
    Model r = model_from_json(a);
    CHECK(model_to_json(r) == a);
}

TEST_CASE("save_model / load_model round trip through a file") {
    Model m = sample_model();
    TempFile f("sor_model_io_test.json");
    save_model(m, f.path);
    Model r = load_model(f.path);
    CHECK(model_to_json(r) == model_to_json(m));
}

TEST_CASE("loader rejects malformed and mismatched input") {
    Model m = sample_model();
    const std::string good = model_to_json(m);

    CHECK_THROWS_AS(model_from_json("{not json"), ParseError);
    CHECK_THROWS_AS(model_from_json("{}"), ParseError);

    SUBCASE("unsupported version") {
        std::string bad = good;
        const auto pos = bad.find("\"version\": 1");
        REQUIRE(pos != std::string::npos);
        bad.replace(pos, 12, "\"version\": 9");
        CHECK_THROWS_AS(model_from_json(bad), VersionError);
    }
    SUBCASE("unknown layer kind") {
        std::string bad = good;
        const auto pos = bad.find("\"conv2d\"");
        REQUIRE(pos != std::string::npos);
        bad.replace(pos, 8, "\"conv9d\"");
        CHECK_THROWS_AS(model_from_json(bad), ParseError);
    }
    SUBCASE("truncated file") {
        CHECK_THROWS_AS(model_from_json(good.substr(0, good.size() / 2)), ParseError);
    }
}

TEST_CASE("loading a missing file reports a usable error") {
    CHECK_THROWS_AS(load_model("/nonexistent/dir/model.json"), ValidationError);
}
