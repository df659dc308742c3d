#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "sor/penalty.hpp"

namespace sor {

struct PruneReport {
    double threshold = 0.0;
    /// (block, channel) pairs whose gate fell below the threshold.
    std::vector<std::pair<int, int>> zeroed_gates;
    /// (block, channel) pairs whose weight group fell below the threshold.
    std::vector<std::pair<int, int>> zeroed_groups;
    /// Zeroed structures / total regularized structures.
    double removed_fraction = 0.0;
    /// Parameters removed by the structural phase (original minus pruned).
    long long parameter_delta = 0;
    /// True when some block lost every channel. The pruned model is still
    /// well-formed (zero-width tensors), but downstream layers see constants.
    bool degenerate = false;
};

/// Fraction of regularized structures currently below the threshold, without
/// modifying the model. Structures are gate scalars (by |beta|) and weight
/// groups (by max |w| in the group). threshold must be > 0.
double removed_fraction(const nn::Model& model, const GateSet& gates,
                        const ObjectiveConfig& cfg, double threshold);

/// Phase one: snap sub-threshold structures to exact zero in place.
/// Gate scalars with |beta| < threshold become 0; groups whose max |w| is
/// below the threshold have every member set to 0. Fills the report's
/// zeroed_* lists and removed_fraction.
PruneReport zero_subthreshold(nn::Model& model, const GateSet& gates,
                              const ObjectiveConfig& cfg, double threshold);

/// Phase two on top of phase one: structurally removes every zeroed channel.
/// The producing filter (weights + bias), its gate scalar, and all consumer
/// weights reading that channel disappear; remaining channels keep their
/// relative order. The pruned model's outputs equal the zeroed model's
/// outputs exactly, because dropped terms are exact zeros under IEEE
/// addition. Returns the pruned model; `model` itself is left zeroed.
nn::Model prune(nn::Model& model, const BlockPartition& part, const GateSet& gates,
                const ObjectiveConfig& cfg, double threshold, PruneReport& report);

}  // namespace sor
