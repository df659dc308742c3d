#include "sor/penalty.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "sor/errors.hpp"

namespace sor {

void ObjectiveConfig::validate() const {
    if (lambda1 < 0.0 || lambda2 < 0.0)
        throw ValidationError("penalty strengths must be non-negative");
    std::set<int> gated(omega_new.begin(), omega_new.end());
    for (int b : omega0)
        if (gated.count(b))
            throw ValidationError(
                "block " + std::to_string(b) +
                " appears in both penalty sets; a gate feeding group-lasso'd weights "
                "would regularize the same path twice");
}

static nn::Param& weight_param_of(nn::Model& model, std::size_t layer_index) {
    auto params = model.layer(layer_index).params();
    for (nn::Param* p : params)
        if (p->name == "weights") return *p;
    throw ValidationError("layer " + std::to_string(layer_index) + " has no weight tensor");
}

std::vector<WeightGroup> groups_by_input_channel(const nn::Model& model,
                                                 std::size_t layer_index, int in_channels) {
    if (in_channels <= 0) throw ValidationError("group construction needs channels > 0");
    const nn::Layer& layer = model.layer(layer_index);
    std::vector<WeightGroup> groups;
    groups.reserve(static_cast<std::size_t>(in_channels));
    for (int k = 0; k < in_channels; ++k) {
        WeightGroup g;
        g.layer_index = layer_index;
        g.channel = k;
        g.weight_indices = layer.input_channel_weight_indices(k);
        if (g.weight_indices.empty())
            throw ValidationError("layer " + std::to_string(layer_index) + " (" +
                                  layer.kind() + ") exposes no weights for channel " +
                                  std::to_string(k));
        groups.push_back(std::move(g));
    }
    return groups;
}

ObjectiveConfig make_objective_config(const nn::Model& model, const BlockPartition& part,
                                      const GateSet& gates, double lambda1, double lambda2) {
    if (part.num_frozen < 1)
        throw ValidationError("objective config requires frozen blocks");
    ObjectiveConfig cfg;
    cfg.lambda1 = lambda1;
    cfg.lambda2 = lambda2;
    for (const auto& e : gates.entries) cfg.omega_new.push_back(e.block);

    const int last_frozen = part.num_frozen - 1;
    cfg.omega0.push_back(last_frozen);

    // The group-lasso lives on the first trainable layer, which consumes the
    // last frozen block's output; one group per output channel of that block.
    const auto [lo, hi] = part.layer_range(last_frozen + 1);
    (void)hi;
    std::size_t first_trainable = lo;
    const int channels = block_channels(model, part, last_frozen);
    cfg.groups = groups_by_input_channel(model, first_trainable, channels);
    for (auto& g : cfg.groups) g.block = last_frozen;
    cfg.validate();
    return cfg;
}

double l1_penalty(const nn::Model& model, const GateSet& gates, double lambda1) {
    if (lambda1 < 0.0) throw ValidationError("lambda1 must be non-negative");
    double sum = 0.0;
    for (std::size_t i = 0; i < gates.entries.size(); ++i) {
        const auto& beta = gates.layer(model, i).beta.value;
        for (std::size_t j = 0; j < beta.size(); ++j) sum += std::fabs(beta[j]);
    }
    return lambda1 * sum;
}

static void check_disjoint(const std::vector<WeightGroup>& groups) {
    std::set<std::pair<std::size_t, std::size_t>> seen;
    for (const auto& g : groups)
        for (std::size_t idx : g.weight_indices)
            if (!seen.insert({g.layer_index, idx}).second)
                throw ValidationError("weight groups overlap at layer " +
                                      std::to_string(g.layer_index) + " index " +
                                      std::to_string(idx));
}

double group_lasso_penalty(const nn::Model& model, const std::vector<WeightGroup>& groups,
                           double lambda2) {
    if (lambda2 < 0.0) throw ValidationError("lambda2 must be non-negative");
    check_disjoint(groups);
    double sum = 0.0;
    for (const auto& g : groups) {
        const nn::Param& w = weight_param_of(const_cast<nn::Model&>(model), g.layer_index);
        double sq = 0.0;
        for (std::size_t idx : g.weight_indices) {
            if (idx >= w.value.size())
                throw ValidationError("weight group index out of range");
            sq += w.value[idx] * w.value[idx];
        }
        sum += std::sqrt(sq);
    }
    return lambda2 * sum;
}

double objective(double data_loss, const nn::Model& model, const GateSet& gates,
                 const ObjectiveConfig& cfg) {
    cfg.validate();
    return data_loss + l1_penalty(model, gates, cfg.lambda1) +
           group_lasso_penalty(model, cfg.groups, cfg.lambda2);
}

void add_penalty_subgradients(nn::Model& model, const GateSet& gates,
                              const ObjectiveConfig& cfg) {
    cfg.validate();
    if (cfg.lambda1 > 0.0) {
        for (std::size_t i = 0; i < gates.entries.size(); ++i) {
            nn::GateLayer& gate = gates.layer(model, i);
            if (gate.frozen) continue;
            for (std::size_t j = 0; j < gate.beta.value.size(); ++j) {
                const double b = gate.beta.value[j];
                if (b > 0.0) gate.beta.grad[j] += cfg.lambda1;
                else if (b < 0.0) gate.beta.grad[j] -= cfg.lambda1;
                // sign(0) contributes nothing
            }
        }
    }
    if (cfg.lambda2 > 0.0) {
        for (const auto& g : cfg.groups) {
            if (model.layer(g.layer_index).frozen) continue;
            nn::Param& w = weight_param_of(model, g.layer_index);
            double sq = 0.0;
            for (std::size_t idx : g.weight_indices) sq += w.value[idx] * w.value[idx];
            const double norm = std::sqrt(sq);
            if (norm <= cfg.group_eps) continue;  // subgradient 0 at the origin
            const double scale = cfg.lambda2 / norm;
            for (std::size_t idx : g.weight_indices) w.grad[idx] += scale * w.value[idx];
        }
    }
}

}  // namespace sor
