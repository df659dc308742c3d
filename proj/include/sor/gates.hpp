#pragma once

#include <cstddef>
#include <vector>

#include "sor/blocks.hpp"
#include "sor/model.hpp"

namespace sor {

/// Locations of the scalar gate layers inserted on frozen block outputs.
struct GateSet {
    struct Entry {
        int block;               // block whose output the gate scales
        std::size_t layer_index; // position of the gate layer in the model
    };
    std::vector<Entry> entries;

    bool empty() const { return entries.empty(); }
    nn::GateLayer& layer(nn::Model& model, std::size_t i) const;
    const nn::GateLayer& layer(const nn::Model& model, std::size_t i) const;

    /// All gate multipliers, in entry order. Handy for tests and reports.
    std::vector<std::vector<double>> values(const nn::Model& model) const;
};

/// Inserts one gate after the output of block `block`. Only frozen blocks
/// that feed another frozen block may be gated: the last frozen block feeds
/// trainable layers that can rescale freely, and gating a trainable block
/// would double-parameterize weights the optimizer already reaches.
GateSet::Entry insert_gate_after_block(nn::Model& model, BlockPartition& part, int block);

/// Gates every eligible block (0 .. num_frozen-2), betas initialized to 1 so
/// the gated model starts exactly equal to the ungated one. Updates `part`
/// so gate layers belong to the block they scale.
GateSet insert_gates(nn::Model& model, BlockPartition& part);

}  // namespace sor
