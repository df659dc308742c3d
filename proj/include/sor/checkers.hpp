#pragma once

#include <cstdint>

#include "sor/blocks.hpp"

namespace sor {

/// Empirically tests whether output channel k of block `block` can be
/// silenced from downstream: with every next-block weight that reads channel
/// k set to zero, the network output must be exactly independent of that
/// channel's activation. Probes `n_inputs` random inputs (uniform in
/// [-1, 1)); returns false on the first discrepancy.
///
/// Holds for stacks where the next block touches its input only through
/// those weights; fails for blocks that forward inputs verbatim (e.g.
/// concatenate-style skips).
bool check_channel_isolation(const nn::Model& model, const BlockPartition& part, int block,
                             int channel, int n_inputs = 16, std::uint64_t seed = 401);

/// Empirically tests whether zeroing the parameters that produce output
/// channel j of block `block` forces that channel's activation to exactly
/// zero on random inputs. True for linear convolutions and zero-fixing
/// activations (relu), false e.g. for sigmoid units (sigmoid(0) = 0.5).
bool check_zeroed_params_silence_output(const nn::Model& model, const BlockPartition& part,
                                        int block, int channel, int n_inputs = 16,
                                        std::uint64_t seed = 402);

}  // namespace sor
