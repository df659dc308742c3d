#include "sor/prune.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "sor/errors.hpp"

namespace sor {

namespace {

struct BelowThreshold {
    std::vector<std::pair<int, int>> gates;   // (block, channel)
    std::vector<std::pair<int, int>> groups;  // (block, channel)
    std::size_t total_structures = 0;
};

BelowThreshold scan(const nn::Model& model, const GateSet& gates,
                    const ObjectiveConfig& cfg, double threshold) {
    if (threshold <= 0.0) throw ValidationError("prune threshold must be positive");
    cfg.validate();
    BelowThreshold out;
    for (std::size_t i = 0; i < gates.entries.size(); ++i) {
        const auto& beta = gates.layer(model, i).beta.value;
        out.total_structures += beta.size();
        for (std::size_t j = 0; j < beta.size(); ++j)
            if (std::fabs(beta[j]) < threshold)
                out.gates.emplace_back(gates.entries[i].block, static_cast<int>(j));
    }
    for (const auto& g : cfg.groups) {
        ++out.total_structures;
        const nn::Layer& layer = model.layer(g.layer_index);
        const nn::Param* w = nullptr;
        for (nn::Param* p : const_cast<nn::Layer&>(layer).params())
            if (p->name == "weights") w = p;
        if (!w) throw ValidationError("weight group names a layer without weights");
        double peak = 0.0;
        for (std::size_t idx : g.weight_indices)
            peak = std::max(peak, std::fabs(w->value[idx]));
        if (peak < threshold) out.groups.emplace_back(g.block, g.channel);
    }
    return out;
}

std::vector<int> complement(int n, const std::set<int>& removed) {
    std::vector<int> kept;
    for (int i = 0; i < n; ++i)
        if (!removed.count(i)) kept.push_back(i);
    return kept;
}

}  // namespace

double removed_fraction(const nn::Model& model, const GateSet& gates,
                        const ObjectiveConfig& cfg, double threshold) {
    const BelowThreshold below = scan(model, gates, cfg, threshold);
    if (below.total_structures == 0) return 0.0;
    return static_cast<double>(below.gates.size() + below.groups.size()) /
           static_cast<double>(below.total_structures);
}

PruneReport zero_subthreshold(nn::Model& model, const GateSet& gates,
                              const ObjectiveConfig& cfg, double threshold) {
    const BelowThreshold below = scan(model, gates, cfg, threshold);

    for (std::size_t i = 0; i < gates.entries.size(); ++i) {
        auto& beta = gates.layer(model, i).beta.value;
        for (std::size_t j = 0; j < beta.size(); ++j)
            if (std::fabs(beta[j]) < threshold) beta[j] = 0.0;
    }
    std::set<std::pair<int, int>> zeroed_groups(below.groups.begin(), below.groups.end());
    for (const auto& g : cfg.groups) {
        if (!zeroed_groups.count({g.block, g.channel})) continue;
        for (nn::Param* p : model.layer(g.layer_index).params())
            if (p->name == "weights")
                for (std::size_t idx : g.weight_indices) p->value[idx] = 0.0;
    }

    PruneReport report;
    report.threshold = threshold;
    report.zeroed_gates = below.gates;
    report.zeroed_groups = below.groups;
    report.removed_fraction =
        below.total_structures == 0
            ? 0.0
            : static_cast<double>(below.gates.size() + below.groups.size()) /
                  static_cast<double>(below.total_structures);
    return report;
}

nn::Model prune(nn::Model& model, const BlockPartition& part, const GateSet& gates,
                const ObjectiveConfig& cfg, double threshold, PruneReport& report) {
    if (part.block_of_layer.size() != model.num_layers())
        throw ValidationError("partition does not match this model");
    report = zero_subthreshold(model, gates, cfg, threshold);
    const long long original = static_cast<long long>(model.parameter_count());

    // Channels to remove, keyed by the block producing them.
    std::map<int, std::set<int>> removals;
    for (const auto& [block, ch] : report.zeroed_gates) removals[block].insert(ch);
    for (const auto& [block, ch] : report.zeroed_groups) removals[block].insert(ch);

    nn::Model pruned = model;

    std::map<std::size_t, const std::set<int>*> producer_removals;
    for (const auto& [block, channels] : removals)
        producer_removals[channel_producer_layer(model, part, block)] = &channels;

    // Walk the layers tracking which original channels of the running tensor
    // survive. `kept` is empty while no channel has been dropped yet.
    std::vector<int> kept;
    bool reduced = false;
    for (std::size_t i = 0; i < pruned.num_layers(); ++i) {
        const std::vector<int> entering_shape =
            i == 0 ? model.input_shape() : model.shape_after(i - 1);
        nn::Layer& layer = pruned.layer(i);

        if (auto* conv = dynamic_cast<nn::Conv2dLayer*>(&layer)) {
            if (reduced) conv->keep_input_channels(kept);
            const auto it = producer_removals.find(i);
            if (it != producer_removals.end()) {
                kept = complement(conv->filters, *it->second);
                conv->keep_filters(kept);
                reduced = true;
                if (kept.empty()) report.degenerate = true;
            } else if (reduced) {
                // This layer's own filters are untouched; downstream sees all.
                kept.clear();
                reduced = false;
            }
        } else if (auto* dense = dynamic_cast<nn::DenseLayer*>(&layer)) {
            if (reduced) {
                const int orig_channels = entering_shape.back();
                std::vector<int> rows;
                const std::set<int> kept_set(kept.begin(), kept.end());
                for (int d = 0; d < dense->inputs; ++d)
                    if (kept_set.count(d % orig_channels)) rows.push_back(d);
                dense->keep_input_rows(rows);
            }
            const auto it = producer_removals.find(i);
            if (it != producer_removals.end()) {
                kept = complement(dense->units, *it->second);
                dense->keep_units(kept);
                reduced = true;
                if (kept.empty()) report.degenerate = true;
            } else {
                kept.clear();
                reduced = false;
            }
        } else if (auto* gate = dynamic_cast<nn::GateLayer*>(&layer)) {
            if (reduced) gate->keep_channels(kept);
        }
        // Pools, GAP, and elementwise activations carry channels through
        // untouched; `kept` remains valid across them.
    }

    pruned.recompute_shapes();
    report.parameter_delta = original - static_cast<long long>(pruned.parameter_count());
    return pruned;
}

}  // namespace sor
