#pragma once

#include "sor/tensor.hpp"

namespace sor::nn {

/// Predictions are clamped into [kBceEps, 1 - kBceEps] before the log;
/// inside the clamped region the gradient is defined as 0.
inline constexpr double kBceEps = 1e-7;

/// Mean binary cross-entropy over all elements. Labels must be exactly 0 or 1.
double bce_loss(const Tensor& pred, const Tensor& labels);

/// Gradient of bce_loss with respect to pred (the 1/n factor included).
Tensor bce_loss_grad(const Tensor& pred, const Tensor& labels);

/// Fraction of predictions on the correct side of 0.5 (>= 0.5 counts as 1).
double binary_accuracy(const Tensor& pred, const Tensor& labels);

}  // namespace sor::nn
