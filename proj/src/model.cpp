#include "sor/model.hpp"

#include <cmath>

#include "sor/errors.hpp"

namespace sor::nn {

Model::Model(std::vector<int> input_shape) : input_shape_(std::move(input_shape)) {
    if (input_shape_.empty()) throw ValidationError("model: empty input shape");
    (void)shape_product(input_shape_);
    shapes_.push_back(input_shape_);
}

Model::Model(const Model& other)
    : meta(other.meta), input_shape_(other.input_shape_), shapes_(other.shapes_) {
    layers_.reserve(other.layers_.size());
    for (const auto& l : other.layers_) layers_.push_back(l->clone());
}

Model& Model::operator=(const Model& other) {
    if (this == &other) return *this;
    Model tmp(other);
    *this = std::move(tmp);
    return *this;
}

void Model::push_shape(const Layer& l) {
    shapes_.push_back(l.output_shape(shapes_.back()));
}

Conv2dLayer& Model::add_conv2d(int kh, int kw, int filters, int stride) {
    const auto& in = shapes_.back();
    if (in.size() != 3) throw ValidationError("conv2d must follow a rank-3 tensor");
    auto layer = std::make_unique<Conv2dLayer>(kh, kw, in[2], filters, stride);
    Conv2dLayer& ref = *layer;
    push_shape(*layer);
    layers_.push_back(std::move(layer));
    return ref;
}

MaxPool2dLayer& Model::add_maxpool2d(int pool, int stride) {
    auto layer = std::make_unique<MaxPool2dLayer>(pool, stride);
    MaxPool2dLayer& ref = *layer;
    push_shape(*layer);
    layers_.push_back(std::move(layer));
    return ref;
}

GlobalAvgPoolLayer& Model::add_gap() {
    auto layer = std::make_unique<GlobalAvgPoolLayer>();
    GlobalAvgPoolLayer& ref = *layer;
    push_shape(*layer);
    layers_.push_back(std::move(layer));
    return ref;
}

DenseLayer& Model::add_dense(int units, Activation act) {
    auto layer = std::make_unique<DenseLayer>(shape_product(shapes_.back()), units, act);
    DenseLayer& ref = *layer;
    push_shape(*layer);
    layers_.push_back(std::move(layer));
    return ref;
}

ActivationLayer& Model::add_activation(Activation act) {
    auto layer = std::make_unique<ActivationLayer>(act);
    ActivationLayer& ref = *layer;
    push_shape(*layer);
    layers_.push_back(std::move(layer));
    return ref;
}

Layer& Model::add_layer(std::unique_ptr<Layer> layer) {
    Layer& ref = *layer;
    push_shape(*layer);
    layers_.push_back(std::move(layer));
    return ref;
}

Layer& Model::insert_layer(std::size_t index, std::unique_ptr<Layer> layer) {
    if (index > layers_.size()) throw ValidationError("insert_layer: index out of range");
    const auto in_shape = shapes_[index];
    const auto out_shape = layer->output_shape(in_shape);
    if (out_shape != in_shape)
        throw ValidationError("insert_layer: layer must preserve shape at insertion point");
    Layer& ref = *layer;
    layers_.insert(layers_.begin() + static_cast<std::ptrdiff_t>(index), std::move(layer));
    shapes_.insert(shapes_.begin() + static_cast<std::ptrdiff_t>(index) + 1, out_shape);
    return ref;
}

std::vector<int> Model::output_shape() const { return shapes_.back(); }

std::vector<int> Model::shape_after(std::size_t i) const {
    if (i >= layers_.size()) throw ValidationError("shape_after: layer index out of range");
    return shapes_[i + 1];
}

Layer& Model::layer(std::size_t i) {
    if (i >= layers_.size()) throw ValidationError("layer index out of range");
    return *layers_[i];
}

const Layer& Model::layer(std::size_t i) const {
    if (i >= layers_.size()) throw ValidationError("layer index out of range");
    return *layers_[i];
}

Tensor Model::forward(const Tensor& input) {
    return forward_range(input, 0, layers_.size());
}

Tensor Model::forward_range(const Tensor& input, std::size_t lo, std::size_t hi) {
    if (lo > hi || hi > layers_.size())
        throw ValidationError("forward_range: bad layer range");
    if (input.shape() != shapes_[lo])
        throw ValidationError("forward: input shape " + input.shape_str() +
                              " does not match expected " +
                              Tensor(shapes_[lo]).shape_str());
    Tensor x = input;
    for (std::size_t i = lo; i < hi; ++i) x = layers_[i]->forward(x);
    return x;
}

void Model::backward(const Tensor& loss_grad, std::size_t lowest) {
    if (layers_.empty()) throw ValidationError("backward: empty model");
    Tensor g = loss_grad;
    for (std::size_t i = layers_.size(); i-- > lowest;) {
        const bool want_input = i > lowest;
        g = layers_[i]->backward(g, want_input);
    }
}

void Model::zero_grads() {
    for (auto& l : layers_) l->zero_grads();
}

std::vector<Param*> Model::all_params() {
    std::vector<Param*> out;
    for (auto& l : layers_)
        for (Param* p : l->params()) out.push_back(p);
    return out;
}

std::vector<Param*> Model::trainable_params() {
    std::vector<Param*> out;
    for (auto& l : layers_) {
        if (l->frozen) continue;
        for (Param* p : l->params()) out.push_back(p);
    }
    return out;
}

std::size_t Model::parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += l->param_count();
    return n;
}

std::size_t Model::lowest_trainable_layer() const {
    for (std::size_t i = 0; i < layers_.size(); ++i)
        if (!layers_[i]->frozen && !const_cast<Layer&>(*layers_[i]).params().empty())
            return i;
    return layers_.size();
}

void Model::init_params(Xoshiro256& rng) {
    for (auto& l : layers_) {
        if (auto* conv = dynamic_cast<Conv2dLayer*>(l.get())) {
            const double fan_in = static_cast<double>(conv->kh) * conv->kw * conv->in_channels;
            const double fan_out = static_cast<double>(conv->kh) * conv->kw * conv->filters;
            const double limit = std::sqrt(6.0 / (fan_in + fan_out));
            for (std::size_t i = 0; i < conv->weights.value.size(); ++i)
                conv->weights.value[i] = rng.uniform(-limit, limit);
            conv->bias.value.fill(0.0);
        } else if (auto* dense = dynamic_cast<DenseLayer*>(l.get())) {
            const double limit =
                std::sqrt(6.0 / (static_cast<double>(dense->inputs) + dense->units));
            for (std::size_t i = 0; i < dense->weights.value.size(); ++i)
                dense->weights.value[i] = rng.uniform(-limit, limit);
            dense->bias.value.fill(0.0);
        }
        // Gates keep their construction value of exactly 1.
    }
}

void Model::recompute_shapes() {
    shapes_.assign(1, input_shape_);
    for (auto& l : layers_) push_shape(*l);
}

}  // namespace sor::nn
