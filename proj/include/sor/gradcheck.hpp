#pragma once

#include <functional>
#include <string>
#include <vector>

#include "sor/model.hpp"

namespace sor::nn {

struct GradCheckEntry {
    std::string param;  // "layer3/weights"
    std::size_t index;
    double analytic;
    double numeric;
    double rel_err;
};

struct GradCheckReport {
    double max_rel_err = 0.0;
    std::size_t n_checked = 0;
    std::vector<GradCheckEntry> failures;  // entries with rel_err > tol
    bool passed() const { return failures.empty(); }
};

/// Compares the gradients currently stored in the model's trainable params
/// against central finite differences of `loss` (forward-only). Parameters
/// are perturbed one scalar at a time and restored exactly.
GradCheckReport compare_gradients_fd(Model& model,
                                     const std::function<double(Model&)>& loss,
                                     double h, double tol);

/// Runs forward + mean-BCE backward on (input, label), then checks every
/// trainable parameter gradient against finite differences.
GradCheckReport gradient_check(Model& model, const Tensor& input, const Tensor& label,
                               double h = 1e-5, double tol = 1e-4);

}  // namespace sor::nn
