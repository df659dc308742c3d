#include "sor/loss.hpp"

#include <cmath>

#include "sor/errors.hpp"

namespace sor::nn {

static void check_pair(const Tensor& pred, const Tensor& labels) {
    if (!pred.same_shape(labels))
        throw ValidationError("loss: prediction shape " + pred.shape_str() +
                              " does not match labels " + labels.shape_str());
    if (pred.size() == 0) throw ValidationError("loss: empty tensors");
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i] != 0.0 && labels[i] != 1.0)
            throw ValidationError("loss: labels must be exactly 0 or 1");
}

double bce_loss(const Tensor& pred, const Tensor& labels) {
    check_pair(pred, labels);
    double total = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        double p = pred[i];
        if (p < kBceEps) p = kBceEps;
        if (p > 1.0 - kBceEps) p = 1.0 - kBceEps;
        total += labels[i] == 1.0 ? -std::log(p) : -std::log(1.0 - p);
    }
    return total / static_cast<double>(pred.size());
}

Tensor bce_loss_grad(const Tensor& pred, const Tensor& labels) {
    check_pair(pred, labels);
    Tensor g(pred.shape());
    const double inv_n = 1.0 / static_cast<double>(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double p = pred[i];
        if (p < kBceEps || p > 1.0 - kBceEps) {
            g[i] = 0.0;  // clamped region is flat
        } else {
            g[i] = (labels[i] == 1.0 ? -1.0 / p : 1.0 / (1.0 - p)) * inv_n;
        }
    }
    return g;
}

double binary_accuracy(const Tensor& pred, const Tensor& labels) {
    check_pair(pred, labels);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double cls = pred[i] >= 0.5 ? 1.0 : 0.0;
        if (cls == labels[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(pred.size());
}

}  // namespace sor::nn
