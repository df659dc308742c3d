#include "sor/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "sor/errors.hpp"
#include "sor/loss.hpp"

namespace sor::nn {

static double rel_error(double a, double b) {
    const double scale = std::max({std::fabs(a), std::fabs(b), 1e-8});
    return std::fabs(a - b) / scale;
}

GradCheckReport compare_gradients_fd(Model& model,
                                     const std::function<double(Model&)>& loss,
                                     double h, double tol) {
    if (h <= 0.0) throw ValidationError("gradient check: step h must be positive");
    GradCheckReport report;
    for (std::size_t li = 0; li < model.num_layers(); ++li) {
        Layer& layer = model.layer(li);
        if (layer.frozen) continue;
        for (Param* p : layer.params()) {
            for (std::size_t i = 0; i < p->value.size(); ++i) {
                const double saved = p->value[i];
                p->value[i] = saved + h;
                const double up = loss(model);
                p->value[i] = saved - h;
                const double down = loss(model);
                p->value[i] = saved;
                const double numeric = (up - down) / (2.0 * h);
                const double analytic = p->grad[i];
                const double err = rel_error(analytic, numeric);
                report.max_rel_err = std::max(report.max_rel_err, err);
                ++report.n_checked;
                if (err > tol)
                    report.failures.push_back({"layer" + std::to_string(li) + "/" + p->name,
                                               i, analytic, numeric, err});
            }
        }
    }
    return report;
}

GradCheckReport gradient_check(Model& model, const Tensor& input, const Tensor& label,
                               double h, double tol) {
    model.zero_grads();
    const Tensor pred = model.forward(input);
    model.backward(bce_loss_grad(pred, label), model.lowest_trainable_layer());
    auto loss = [&input, &label](Model& m) { return bce_loss(m.forward(input), label); };
    return compare_gradients_fd(model, loss, h, tol);
}

}  // namespace sor::nn
