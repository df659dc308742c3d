#include "sor/blocks.hpp"

#include <numeric>

#include "sor/errors.hpp"

namespace sor {

std::pair<std::size_t, std::size_t> BlockPartition::layer_range(int block) const {
    if (block < 0 || block >= num_blocks)
        throw ValidationError("block index " + std::to_string(block) + " out of range");
    std::size_t lo = 0;
    while (lo < block_of_layer.size() && block_of_layer[lo] != block) ++lo;
    std::size_t hi = lo;
    while (hi < block_of_layer.size() && block_of_layer[hi] == block) ++hi;
    return {lo, hi};
}

int BlockPartition::block_of(std::size_t layer_index) const {
    if (layer_index >= block_of_layer.size())
        throw ValidationError("layer index out of range");
    return block_of_layer[layer_index];
}

BlockPartition define_blocks(const nn::Model& model, const std::vector<int>& layers_per_block) {
    if (layers_per_block.size() < 2)
        throw ValidationError("block partition needs at least two blocks");
    for (int n : layers_per_block)
        if (n < 1) throw ValidationError("every block needs at least one layer");
    const std::size_t covered =
        std::accumulate(layers_per_block.begin(), layers_per_block.end(), std::size_t{0});
    if (covered != model.num_layers())
        throw ValidationError("block layer counts cover " + std::to_string(covered) +
                              " layers but the model has " +
                              std::to_string(model.num_layers()));

    for (std::size_t i = 0; i < model.num_layers(); ++i) {
        const nn::Layer& l = model.layer(i);
        if (l.forwards_input_verbatim())
            throw ValidationError("layer " + std::to_string(i) + " (" + l.kind() +
                                  ") forwards its input verbatim; zeroing its incoming "
                                  "weights cannot silence the upstream channel, so this "
                                  "model cannot be partitioned");
        if (l.consumes_channel_count())
            throw ValidationError("layer " + std::to_string(i) + " (" + l.kind() +
                                  ") changes behavior with the channel count, so pruned "
                                  "and zeroed networks would disagree");
    }

    BlockPartition part;
    part.num_blocks = static_cast<int>(layers_per_block.size());
    for (int b = 0; b < part.num_blocks; ++b)
        for (int k = 0; k < layers_per_block[b]; ++k) part.block_of_layer.push_back(b);
    return part;
}

void freeze_blocks(nn::Model& model, BlockPartition& part, int num_frozen) {
    if (model.num_layers() != part.block_of_layer.size())
        throw ValidationError("partition does not match this model");
    if (num_frozen < 1)
        throw ValidationError("at least one block must be frozen");
    if (num_frozen >= part.num_blocks)
        throw ValidationError("the final block must stay trainable");
    for (std::size_t i = 0; i < model.num_layers(); ++i)
        model.layer(i).frozen = part.block_of_layer[i] < num_frozen;
    part.num_frozen = num_frozen;
}

int block_channels(const nn::Model& model, const BlockPartition& part, int block) {
    const auto [lo, hi] = part.layer_range(block);
    (void)lo;
    const auto shape = model.shape_after(hi - 1);
    if (shape.empty()) throw ValidationError("block output has no channel axis");
    return shape.back();
}

nn::Tensor block_output(nn::Model& model, const BlockPartition& part, int block,
                        const nn::Tensor& block_input) {
    const auto [lo, hi] = part.layer_range(block);
    return model.forward_range(block_input, lo, hi);
}

std::size_t channel_producer_layer(const nn::Model& model, const BlockPartition& part,
                                   int block) {
    const auto [lo, hi] = part.layer_range(block);
    for (std::size_t i = hi; i-- > lo;) {
        const nn::Layer& l = model.layer(i);
        if (dynamic_cast<const nn::Conv2dLayer*>(&l) ||
            dynamic_cast<const nn::DenseLayer*>(&l))
            return i;
    }
    throw ValidationError("block " + std::to_string(block) +
                          " has no channel-producing layer");
}

}  // namespace sor
