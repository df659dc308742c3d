#include "sor/gates.hpp"

#include <memory>

#include "sor/errors.hpp"

namespace sor {

nn::GateLayer& GateSet::layer(nn::Model& model, std::size_t i) const {
    return dynamic_cast<nn::GateLayer&>(model.layer(entries.at(i).layer_index));
}

const nn::GateLayer& GateSet::layer(const nn::Model& model, std::size_t i) const {
    return dynamic_cast<const nn::GateLayer&>(model.layer(entries.at(i).layer_index));
}

std::vector<std::vector<double>> GateSet::values(const nn::Model& model) const {
    std::vector<std::vector<double>> out;
    for (const auto& e : entries) {
        const auto& gate = dynamic_cast<const nn::GateLayer&>(model.layer(e.layer_index));
        out.push_back(gate.beta.value.raw());
    }
    return out;
}

GateSet::Entry insert_gate_after_block(nn::Model& model, BlockPartition& part, int block) {
    if (part.num_frozen < 1)
        throw ValidationError("freeze blocks before inserting gates");
    if (block < 0 || block >= part.num_blocks)
        throw ValidationError("gate target block out of range");
    if (block >= part.num_frozen)
        throw ValidationError("block " + std::to_string(block) +
                              " is trainable; gating it would duplicate parameters the "
                              "optimizer already trains");
    if (block == part.num_frozen - 1)
        throw ValidationError("block " + std::to_string(block) +
                              " feeds trainable layers that absorb any rescaling; gating "
                              "it would over-parameterize the objective");

    const auto [lo, hi] = part.layer_range(block);
    (void)lo;
    const int channels = block_channels(model, part, block);
    auto& gate = model.insert_layer(hi, std::make_unique<nn::GateLayer>(channels));
    gate.frozen = false;  // the gate itself trains even though its block is frozen
    part.block_of_layer.insert(part.block_of_layer.begin() + static_cast<std::ptrdiff_t>(hi),
                               block);
    return {block, hi};
}

GateSet insert_gates(nn::Model& model, BlockPartition& part) {
    if (part.num_frozen < 1)
        throw ValidationError("freeze blocks before inserting gates");
    GateSet set;
    // Ascending order: every insertion happens above all previously recorded
    // gate positions, so stored layer indices stay valid.
    for (int block = 0; block <= part.num_frozen - 2; ++block)
        set.entries.push_back(insert_gate_after_block(model, part, block));
    return set;
}

}  // namespace sor
