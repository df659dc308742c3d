#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "sor/layers.hpp"
#include "sor/rng.hpp"
#include "sor/tensor.hpp"

namespace sor::nn {

/// Sequential feed-forward network over rank-3 image inputs.
///
/// Shapes are inferred at construction time: each add_* validates against the
/// running output shape, so a malformed stack fails fast instead of at the
/// first forward pass.
class Model {
public:
    explicit Model(std::vector<int> input_shape);

    Model(const Model& other);
    Model& operator=(const Model& other);
    Model(Model&&) noexcept = default;
    Model& operator=(Model&&) noexcept = default;

    Conv2dLayer& add_conv2d(int kh, int kw, int filters, int stride = 1);
    MaxPool2dLayer& add_maxpool2d(int pool, int stride);
    GlobalAvgPoolLayer& add_gap();
    DenseLayer& add_dense(int units, Activation act);
    ActivationLayer& add_activation(Activation act);

    /// Appends an arbitrary layer (shape-validated). Used by tests that
    /// exercise the structural checks with synthetic layer types.
    Layer& add_layer(std::unique_ptr<Layer> layer);

    /// Inserts a layer so it runs at position `index` (0 = before everything).
    /// The layer must preserve the tensor shape at that point.
    Layer& insert_layer(std::size_t index, std::unique_ptr<Layer> layer);

    const std::vector<int>& input_shape() const { return input_shape_; }
    std::vector<int> output_shape() const;
    /// Tensor shape flowing out of layer index i (i == num_layers() for the
    /// final output, shape_before(0) == input_shape()).
    std::vector<int> shape_after(std::size_t i) const;

    std::size_t num_layers() const { return layers_.size(); }
    Layer& layer(std::size_t i);
    const Layer& layer(std::size_t i) const;

    /// Full forward pass; every layer caches for a subsequent backward().
    Tensor forward(const Tensor& input);
    /// Runs layers [lo, hi) only. Caller supplies the tensor entering layer lo.
    Tensor forward_range(const Tensor& input, std::size_t lo, std::size_t hi);

    /// Backpropagates loss_grad from the top. Parameter gradients accumulate
    /// into Param::grad for unfrozen layers. Descent stops at `lowest`: layers
    /// below it see neither gradients nor work.
    void backward(const Tensor& loss_grad, std::size_t lowest = 0);

    void zero_grads();
    std::vector<Param*> all_params();
    /// Trainable = belonging to an unfrozen layer.
    std::vector<Param*> trainable_params();
    std::size_t parameter_count() const;
    /// Lowest layer index owning a trainable parameter; num_layers() if none.
    std::size_t lowest_trainable_layer() const;

    /// Glorot-uniform weight init, biases zero, gates untouched (they start
    /// at 1). Draws happen in layer order, weights in flat row-major order,
    /// so a given seed fixes the exact parameter values.
    void init_params(Xoshiro256& rng);

    /// Re-derives the shape chain from the input. Required after surgery
    /// that changes layer widths in place (pruning).
    void recompute_shapes();

    /// Free-form metadata carried through save/load (provenance: filter
    /// count, data seed, standardization constants, ...).
    std::map<std::string, std::string> meta;

private:
    std::vector<int> input_shape_;
    std::vector<std::vector<int>> shapes_;  // shapes_[i] = shape entering layer i
    std::vector<std::unique_ptr<Layer>> layers_;

    void push_shape(const Layer& l);
};

}  // namespace sor::nn
