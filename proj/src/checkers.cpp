#include "sor/checkers.hpp"

#include "sor/errors.hpp"
#include "sor/rng.hpp"

namespace sor {

static nn::Tensor random_input(const std::vector<int>& shape, Xoshiro256& rng) {
    nn::Tensor t(shape);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-1.0, 1.0);
    return t;
}

bool check_channel_isolation(const nn::Model& model, const BlockPartition& part, int block,
                             int channel, int n_inputs, std::uint64_t seed) {
    if (part.block_of_layer.size() != model.num_layers())
        throw ValidationError("partition does not match this model");
    if (block < 0 || block >= part.num_blocks - 1)
        throw ValidationError("channel isolation needs a block with a successor");
    const int channels = block_channels(model, part, block);
    if (channel < 0 || channel >= channels)
        throw ValidationError("channel out of range for block");

    nn::Model probe = model;

    // Silence every next-block read of the channel: zero the weights of the
    // first parametered layer in block+1 that maps input channel -> weights.
    const auto [nlo, nhi] = part.layer_range(block + 1);
    bool zeroed = false;
    for (std::size_t i = nlo; i < nhi && !zeroed; ++i) {
        nn::Layer& layer = probe.layer(i);
        if (layer.params().empty()) continue;
        const auto indices = layer.input_channel_weight_indices(channel);
        if (indices.empty())
            throw ValidationError("layer " + std::to_string(i) + " (" + layer.kind() +
                                  ") cannot map input channels to weights");
        for (nn::Param* p : layer.params())
            if (p->name == "weights")
                for (std::size_t idx : indices) p->value[idx] = 0.0;
        zeroed = true;
    }
    if (!zeroed)
        throw ValidationError("block " + std::to_string(block + 1) +
                              " has no weights reading its input");

    const auto [blo, bhi] = part.layer_range(block);
    (void)blo;
    Xoshiro256 rng(seed);
    for (int trial = 0; trial < n_inputs; ++trial) {
        const nn::Tensor x = random_input(probe.input_shape(), rng);
        const nn::Tensor base = probe.forward(x);

        nn::Tensor a = probe.forward_range(x, 0, bhi);
        const int c = a.shape().back();
        for (std::size_t j = 0; j < a.size(); ++j)
            if (static_cast<int>(j % c) == channel) a[j] = rng.uniform(-10.0, 10.0);
        const nn::Tensor scrambled = probe.forward_range(a, bhi, probe.num_layers());

        if (!(base == scrambled)) return false;
    }
    return true;
}

bool check_zeroed_params_silence_output(const nn::Model& model, const BlockPartition& part,
                                        int block, int channel, int n_inputs,
                                        std::uint64_t seed) {
    if (part.block_of_layer.size() != model.num_layers())
        throw ValidationError("partition does not match this model");
    const int channels = block_channels(model, part, block);
    if (channel < 0 || channel >= channels)
        throw ValidationError("channel out of range for block");

    nn::Model probe = model;
    const std::size_t producer = channel_producer_layer(probe, part, block);
    probe.layer(producer).zero_output_channel_params(channel);

    const auto [lo, hi] = part.layer_range(block);
    (void)lo;
    Xoshiro256 rng(seed);
    for (int trial = 0; trial < n_inputs; ++trial) {
        const nn::Tensor x = random_input(probe.input_shape(), rng);
        const nn::Tensor a = probe.forward_range(x, 0, hi);
        const int c = a.shape().back();
        for (std::size_t j = 0; j < a.size(); ++j)
            if (static_cast<int>(j % c) == channel && a[j] != 0.0) return false;
    }
    return true;
}

}  // namespace sor
