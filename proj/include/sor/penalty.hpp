#pragma once

#include <cstddef>
#include <vector>

#include "sor/blocks.hpp"
#include "sor/gates.hpp"
#include "sor/model.hpp"

namespace sor {

/// One group-lasso group: the weights of `layer_index` that interact with
/// incoming channel `channel`. Indices are flat positions in that layer's
/// weight tensor. Groups over one layer must be pairwise disjoint.
struct WeightGroup {
    std::size_t layer_index = 0;
    int channel = 0;
    /// Block producing the channel these weights read; -1 if not applicable.
    int block = -1;
    std::vector<std::size_t> weight_indices;
};

/// Regularization setup for the transfer objective
///   psi = data_loss + lambda1 * sum over gated blocks of sum_j |beta_j|
///                   + lambda2 * sum over groups of ||w_group||_2.
///
/// The gated blocks and the group-lasso'd block must be disjoint: a gate on
/// the block feeding the grouped weights would multiply the same path twice
/// and make the penalties fight over one degree of freedom.
struct ObjectiveConfig {
    double lambda1 = 0.0;
    double lambda2 = 0.0;
    std::vector<int> omega_new;        // blocks whose gates carry the L1 term
    std::vector<int> omega0;           // blocks whose consumers carry the group term
    std::vector<WeightGroup> groups;
    /// Norms below this count as zero when forming subgradients.
    double group_eps = 1e-12;

    void validate() const;
};

/// Groups the weights of `layer_index` by incoming channel, one group per
/// channel of the tensor feeding that layer. `in_channels` is the trailing
/// dimension of that tensor.
std::vector<WeightGroup> groups_by_input_channel(const nn::Model& model,
                                                 std::size_t layer_index, int in_channels);

/// Standard wiring: omega_new = gated blocks, omega0 = the last frozen block,
/// groups = first-trainable-layer weights grouped by that block's channels.
ObjectiveConfig make_objective_config(const nn::Model& model, const BlockPartition& part,
                                      const GateSet& gates, double lambda1, double lambda2);

/// lambda1 * sum of |beta| over all gates. lambda1 must be >= 0.
double l1_penalty(const nn::Model& model, const GateSet& gates, double lambda1);

/// lambda2 * sum of Euclidean group norms. Validates disjointness.
double group_lasso_penalty(const nn::Model& model, const std::vector<WeightGroup>& groups,
                           double lambda2);

/// data_loss + l1_penalty + group_lasso_penalty with this config.
double objective(double data_loss, const nn::Model& model, const GateSet& gates,
                 const ObjectiveConfig& cfg);

/// Adds the penalty subgradients into the parameter gradient buffers:
/// lambda1 * sign(beta) (0 at beta == 0) and lambda2 * w / ||w_group||
/// (0 for groups with norm <= group_eps).
void add_penalty_subgradients(nn::Model& model, const GateSet& gates,
                              const ObjectiveConfig& cfg);

}  // namespace sor
