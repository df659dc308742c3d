#include "sor/model_io.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"
#include "sor/errors.hpp"

namespace sor::nn {

using nlohmann::json;

namespace {

json tensor_to_json(const Tensor& t) {
    return json{{"shape", t.shape()}, {"data", t.raw()}};
}

Tensor tensor_from_json(const json& j) {
    auto shape = j.at("shape").get<std::vector<int>>();
    auto data = j.at("data").get<std::vector<double>>();
    return Tensor(std::move(shape), std::move(data));
}

json layer_to_json(const Layer& layer) {
    json j;
    j["kind"] = layer.kind();
    j["frozen"] = layer.frozen;
    if (const auto* conv = dynamic_cast<const Conv2dLayer*>(&layer)) {
        j["kh"] = conv->kh;
        j["kw"] = conv->kw;
        j["in_channels"] = conv->in_channels;
        j["filters"] = conv->filters;
        j["stride"] = conv->stride;
        j["params"] = {{"weights", tensor_to_json(conv->weights.value)},
                       {"bias", tensor_to_json(conv->bias.value)}};
    } else if (const auto* pool = dynamic_cast<const MaxPool2dLayer*>(&layer)) {
        j["pool"] = pool->pool;
        j["stride"] = pool->stride;
    } else if (dynamic_cast<const GlobalAvgPoolLayer*>(&layer)) {
        // No state beyond the kind tag.
    } else if (const auto* dense = dynamic_cast<const DenseLayer*>(&layer)) {
        j["inputs"] = dense->inputs;
        j["units"] = dense->units;
        j["activation"] = activation_name(dense->activation);
        j["params"] = {{"weights", tensor_to_json(dense->weights.value)},
                       {"bias", tensor_to_json(dense->bias.value)}};
    } else if (const auto* act = dynamic_cast<const ActivationLayer*>(&layer)) {
        j["activation"] = activation_name(act->activation);
    } else if (const auto* gate = dynamic_cast<const GateLayer*>(&layer)) {
        j["channels"] = gate->channels;
        j["params"] = {{"beta", tensor_to_json(gate->beta.value)}};
    } else {
        throw ValidationError("cannot serialize layer kind: " + layer.kind());
    }
    return j;
}

void load_param(Param& p, const json& params, const char* name) {
    Tensor t = tensor_from_json(params.at(name));
    if (t.shape() != p.value.shape())
        throw ValidationError(std::string("model file: parameter '") + name +
                              "' has shape " + t.shape_str() + ", expected " +
                              p.value.shape_str());
    p.value = std::move(t);
}

void append_layer(Model& model, const json& j) {
    const auto kind = j.at("kind").get<std::string>();
    Layer* added = nullptr;
    if (kind == "conv2d") {
        auto& conv = model.add_conv2d(j.at("kh").get<int>(), j.at("kw").get<int>(),
                                      j.at("filters").get<int>(), j.at("stride").get<int>());
        if (conv.in_channels != j.at("in_channels").get<int>())
            throw ValidationError("model file: conv2d in_channels inconsistent with "
                                  "preceding layer shapes");
        load_param(conv.weights, j.at("params"), "weights");
        load_param(conv.bias, j.at("params"), "bias");
        added = &conv;
    } else if (kind == "maxpool2d") {
        added = &model.add_maxpool2d(j.at("pool").get<int>(), j.at("stride").get<int>());
    } else if (kind == "globalavgpool") {
        added = &model.add_gap();
    } else if (kind == "dense") {
        auto& dense = model.add_dense(j.at("units").get<int>(),
                                      activation_from_name(j.at("activation").get<std::string>()));
        if (dense.inputs != j.at("inputs").get<int>())
            throw ValidationError("model file: dense input count inconsistent with "
                                  "preceding layer shapes");
        load_param(dense.weights, j.at("params"), "weights");
        load_param(dense.bias, j.at("params"), "bias");
        added = &dense;
    } else if (kind == "activation") {
        added = &model.add_activation(
            activation_from_name(j.at("activation").get<std::string>()));
    } else if (kind == "gate") {
        auto gate = std::make_unique<GateLayer>(j.at("channels").get<int>());
        load_param(gate->beta, j.at("params"), "beta");
        added = &model.add_layer(std::move(gate));
    } else {
        throw ParseError("model file: unknown layer kind '" + kind + "'");
    }
    added->frozen = j.at("frozen").get<bool>();
}

}  // namespace

std::string model_to_json(const Model& model) {
    json j;
    j["format"] = "sor-model";
    j["version"] = kModelFormatVersion;
    j["input_shape"] = model.input_shape();
    j["meta"] = model.meta;
    json layers = json::array();
    for (std::size_t i = 0; i < model.num_layers(); ++i)
        layers.push_back(layer_to_json(model.layer(i)));
    j["layers"] = std::move(layers);
    return j.dump(1, '\t') + "\n";
}

Model model_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("model file: ") + e.what());
    }
    try {
        if (j.value("format", std::string()) != "sor-model")
            throw ParseError("model file: missing or wrong format tag");
        const int version = j.at("version").get<int>();
        if (version != kModelFormatVersion)
            throw VersionError("model file: unsupported version " + std::to_string(version) +
                               " (supported: " + std::to_string(kModelFormatVersion) + ")");
        Model model(j.at("input_shape").get<std::vector<int>>());
        for (const auto& lj : j.at("layers")) append_layer(model, lj);
        if (j.contains("meta"))
            model.meta = j.at("meta").get<std::map<std::string, std::string>>();
        return model;
    } catch (const json::exception& e) {
        throw ParseError(std::string("model file: ") + e.what());
    }
}

void save_model(const Model& model, const std::filesystem::path& path) {
    const std::string text = model_to_json(model);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot open for writing: " + path.string());
    out << text;
    if (!out) throw ValidationError("write failed: " + path.string());
}

Model load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open model file: " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return model_from_json(buf.str());
}

}  // namespace sor::nn
