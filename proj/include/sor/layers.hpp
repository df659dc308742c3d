#pragma once

#include <memory>
#include <string>
#include <vector>

#include "sor/tensor.hpp"

namespace sor::nn {

enum class Activation { identity, sigmoid, relu };

Activation activation_from_name(const std::string& name);
const char* activation_name(Activation act);
double apply_activation(Activation act, double x);

/// Named parameter tensor with its gradient buffer (always same shape).
struct Param {
    std::string name;
    Tensor value;
    Tensor grad;

    Param(std::string n, Tensor v) : name(std::move(n)), value(v), grad(v.shape()) {}
};

/// Sequential layer. forward() caches whatever backward() needs; backward()
/// accumulates parameter gradients (unless the layer is frozen) and returns
/// the gradient with respect to its input when want_input_grad is set.
class Layer {
public:
    virtual ~Layer() = default;

    virtual std::string kind() const = 0;
    virtual std::vector<int> output_shape(const std::vector<int>& in) const = 0;
    virtual Tensor forward(const Tensor& in) = 0;
    virtual Tensor backward(const Tensor& grad_out, bool want_input_grad) = 0;
    virtual std::vector<Param*> params() { return {}; }
    virtual std::unique_ptr<Layer> clone() const = 0;

    /// Flat indices into the named weight tensor that interact with input
    /// channel k. Drives both the group-lasso grouping and the empirical
    /// input-invariance checker.
    virtual std::vector<std::size_t> input_channel_weight_indices(int /*k*/) const {
        return {};
    }

    /// Zero the parameters unique to the subfunction producing output
    /// channel j. Only meaningful for channel-producing layers.
    virtual void zero_output_channel_params(int /*j*/) {}

    // Structural predicates consulted by block validation.
    virtual bool forwards_input_verbatim() const { return false; }
    virtual bool consumes_channel_count() const { return false; }

    std::size_t param_count() const;
    void zero_grads();

    bool frozen = false;

protected:
    void require_cache(bool have) const;
};

class Conv2dLayer : public Layer {
public:
    Conv2dLayer(int kh, int kw, int in_channels, int filters, int stride);

    std::string kind() const override { return "conv2d"; }
    std::vector<int> output_shape(const std::vector<int>& in) const override;
    Tensor forward(const Tensor& in) override;
    Tensor backward(const Tensor& grad_out, bool want_input_grad) override;
    std::vector<Param*> params() override { return {&weights, &bias}; }
    std::unique_ptr<Layer> clone() const override;
    std::vector<std::size_t> input_channel_weight_indices(int k) const override;
    void zero_output_channel_params(int j) override;

    /// Parameters belonging to one filter: kh*kw*in_channels weights + 1 bias.
    std::size_t params_per_filter() const;

    /// Rebuild with only the listed input channels / filters kept, in order.
    void keep_input_channels(const std::vector<int>& kept);
    void keep_filters(const std::vector<int>& kept);

    int kh, kw, in_channels, filters, stride;
    Param weights;  // [kh, kw, in_channels, filters]
    Param bias;     // [filters]

private:
    Tensor input_;
    bool has_cache_ = false;
};

class MaxPool2dLayer : public Layer {
public:
    MaxPool2dLayer(int pool, int stride);

    std::string kind() const override { return "maxpool2d"; }
    std::vector<int> output_shape(const std::vector<int>& in) const override;
    Tensor forward(const Tensor& in) override;
    Tensor backward(const Tensor& grad_out, bool want_input_grad) override;
    std::unique_ptr<Layer> clone() const override;

    int pool, stride;

private:
    std::vector<int> input_shape_;
    std::vector<std::size_t> argmax_;  // flat index into input per output element
    bool has_cache_ = false;
};

class GlobalAvgPoolLayer : public Layer {
public:
    std::string kind() const override { return "globalavgpool"; }
    std::vector<int> output_shape(const std::vector<int>& in) const override;
    Tensor forward(const Tensor& in) override;
    Tensor backward(const Tensor& grad_out, bool want_input_grad) override;
    std::unique_ptr<Layer> clone() const override;

private:
    std::vector<int> input_shape_;
    bool has_cache_ = false;
};

class DenseLayer : public Layer {
public:
    DenseLayer(int inputs, int units, Activation act);

    std::string kind() const override { return "dense"; }
    std::vector<int> output_shape(const std::vector<int>& in) const override;
    Tensor forward(const Tensor& in) override;
    Tensor backward(const Tensor& grad_out, bool want_input_grad) override;
    std::vector<Param*> params() override { return {&weights, &bias}; }
    std::unique_ptr<Layer> clone() const override;
    std::vector<std::size_t> input_channel_weight_indices(int k) const override;
    void zero_output_channel_params(int j) override;

    /// Input rows are grouped by incoming channel: row d belongs to channel
    /// d % in_channels_of_source. For rank-1 inputs rows equal channels.
    std::vector<std::size_t> input_row_weight_indices(int row) const;

    void keep_input_rows(const std::vector<int>& kept);
    void keep_units(const std::vector<int>& kept);

    int inputs, units;
    Activation activation;
    Param weights;  // [inputs, units]
    Param bias;     // [units]

private:
    Tensor input_;   // flattened
    Tensor output_;  // post-activation
    bool has_cache_ = false;
};

class ActivationLayer : public Layer {
public:
    explicit ActivationLayer(Activation act) : activation(act) {}

    std::string kind() const override { return "activation"; }
    std::vector<int> output_shape(const std::vector<int>& in) const override { return in; }
    Tensor forward(const Tensor& in) override;
    Tensor backward(const Tensor& grad_out, bool want_input_grad) override;
    std::unique_ptr<Layer> clone() const override;

    Activation activation;

private:
    Tensor output_;
    bool has_cache_ = false;
};

/// Per-channel scalar multiplier on the last axis: out[..., j] = beta[j] * in[..., j].
/// This is the new-weight layer placed on a frozen block's output.
class GateLayer : public Layer {
public:
    explicit GateLayer(int channels);

    std::string kind() const override { return "gate"; }
    std::vector<int> output_shape(const std::vector<int>& in) const override;
    Tensor forward(const Tensor& in) override;
    Tensor backward(const Tensor& grad_out, bool want_input_grad) override;
    std::vector<Param*> params() override { return {&beta}; }
    std::unique_ptr<Layer> clone() const override;

    void keep_channels(const std::vector<int>& kept);

    int channels;
    Param beta;  // [channels], initialized to 1

private:
    Tensor input_;
    bool has_cache_ = false;
};

}  // namespace sor::nn
