#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "sor/model.hpp"

namespace sor {

/// Partition of a model's layers into consecutive blocks. Block indices are
/// 0-based; the final block holds the output layer and is never frozen.
struct BlockPartition {
    std::vector<int> block_of_layer;  // one entry per model layer
    int num_blocks = 0;
    /// Blocks with index < num_frozen are frozen. 0 until freeze() runs.
    int num_frozen = 0;

    std::pair<std::size_t, std::size_t> layer_range(int block) const;  // [lo, hi)
    int block_of(std::size_t layer_index) const;
};

/// Validates and builds a partition from per-block layer counts, e.g.
/// {2, 2, 1} for a five-layer model. Requirements: every count >= 1, the
/// counts cover all layers exactly, at least two blocks, and no layer that
/// forwards inputs verbatim past its own transformation or changes behavior
/// with channel count (those break the independence the gate/penalty
/// machinery relies on).
BlockPartition define_blocks(const nn::Model& model, const std::vector<int>& layers_per_block);

/// Marks the layers of blocks [0, num_frozen) frozen, the rest trainable.
/// num_frozen must satisfy 1 <= num_frozen < num_blocks: the final block
/// stays trainable so the network can adapt to the new task.
void freeze_blocks(nn::Model& model, BlockPartition& part, int num_frozen);

/// Output channel count of a block (trailing dimension of its output shape).
int block_channels(const nn::Model& model, const BlockPartition& part, int block);

/// Index of the layer whose output channels are the block's channels: the
/// last convolution or dense layer in the block. Throws if the block has
/// no such layer.
std::size_t channel_producer_layer(const nn::Model& model, const BlockPartition& part,
                                   int block);

/// Runs only the given block's layers. Input must match the shape entering
/// the block's first layer.
nn::Tensor block_output(nn::Model& model, const BlockPartition& part, int block,
                        const nn::Tensor& block_input);

}  // namespace sor
