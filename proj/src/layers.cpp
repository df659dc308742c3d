#include "sor/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "sor/errors.hpp"

namespace sor::nn {

Activation activation_from_name(const std::string& name) {
    if (name == "identity") return Activation::identity;
    if (name == "sigmoid") return Activation::sigmoid;
    if (name == "relu") return Activation::relu;
    throw ValidationError("unknown activation: " + name);
}

const char* activation_name(Activation act) {
    switch (act) {
        case Activation::identity: return "identity";
        case Activation::sigmoid: return "sigmoid";
        case Activation::relu: return "relu";
    }
    throw ValidationError("unknown activation enum value");
}

double apply_activation(Activation act, double x) {
    switch (act) {
        case Activation::identity: return x;
        case Activation::sigmoid: return 1.0 / (1.0 + std::exp(-x));
        case Activation::relu: return x > 0.0 ? x : 0.0;
    }
    throw ValidationError("unknown activation enum value");
}

// Derivative expressed through the activation's output y.
// sigmoid: y*(1-y); relu: 1 where y>0 (0 at the kink); identity: 1.
static double activation_deriv_from_output(Activation act, double y) {
    switch (act) {
        case Activation::identity: return 1.0;
        case Activation::sigmoid: return y * (1.0 - y);
        case Activation::relu: return y > 0.0 ? 1.0 : 0.0;
    }
    return 0.0;
}

std::size_t Layer::param_count() const {
    std::size_t n = 0;
    for (const Param* p : const_cast<Layer*>(this)->params()) n += p->value.size();
    return n;
}

void Layer::zero_grads() {
    for (Param* p : params()) p->grad.fill(0.0);
}

void Layer::require_cache(bool have) const {
    if (!have) throw std::logic_error(kind() + ": backward called before forward");
}

static void check_rank3(const std::vector<int>& in, const std::string& who) {
    if (in.size() != 3)
        throw ValidationError(who + ": expected rank-3 input [H,W,C], got rank " +
                              std::to_string(in.size()));
}

// ---------------------------------------------------------------------------
// Conv2d: valid padding, channels-last. out[oh,ow,oc] =
//   bias[oc] + sum_{kh,kw,ic} in[oh*s+kh, ow*s+kw, ic] * W[kh,kw,ic,oc]

Conv2dLayer::Conv2dLayer(int kh_, int kw_, int in_channels_, int filters_, int stride_)
    : kh(kh_), kw(kw_), in_channels(in_channels_), filters(filters_), stride(stride_),
      weights("weights", Tensor({kh_, kw_, in_channels_, filters_})),
      bias("bias", Tensor({filters_})) {
    if (kh < 1 || kw < 1) throw ValidationError("conv2d: kernel dims must be >= 1");
    if (filters < 0 || in_channels < 0)
        throw ValidationError("conv2d: negative channel count");
    if (stride < 1) throw ValidationError("conv2d: stride must be >= 1");
}

std::vector<int> Conv2dLayer::output_shape(const std::vector<int>& in) const {
    check_rank3(in, "conv2d");
    if (in[2] != in_channels)
        throw ValidationError("conv2d: expected " + std::to_string(in_channels) +
                              " input channels, got " + std::to_string(in[2]));
    if (in[0] < kh || in[1] < kw)
        throw ValidationError("conv2d: input " + std::to_string(in[0]) + "x" +
                              std::to_string(in[1]) + " smaller than kernel");
    int oh = (in[0] - kh) / stride + 1;
    int ow = (in[1] - kw) / stride + 1;
    return {oh, ow, filters};
}

Tensor Conv2dLayer::forward(const Tensor& in) {
    const auto out_shape = output_shape(in.shape());
    const int H = in.shape()[0], W = in.shape()[1];
    const int OH = out_shape[0], OW = out_shape[1];
    Tensor out(out_shape);

    const double* ip = in.data();
    const double* wp = weights.value.data();
    double* op = out.data();
    for (int oh = 0; oh < OH; ++oh) {
        for (int ow = 0; ow < OW; ++ow) {
            double* orow = op + (static_cast<std::size_t>(oh) * OW + ow) * filters;
            for (int oc = 0; oc < filters; ++oc) orow[oc] = bias.value[oc];
            for (int r = 0; r < kh; ++r) {
                const int ih = oh * stride + r;
                for (int c = 0; c < kw; ++c) {
                    const int iw = ow * stride + c;
                    const double* irow =
                        ip + (static_cast<std::size_t>(ih) * W + iw) * in_channels;
                    const double* wbase =
                        wp + (static_cast<std::size_t>(r) * kw + c) * in_channels * filters;
                    for (int ic = 0; ic < in_channels; ++ic) {
                        const double v = irow[ic];
                        const double* wrow = wbase + static_cast<std::size_t>(ic) * filters;
                        for (int oc = 0; oc < filters; ++oc) orow[oc] += v * wrow[oc];
                    }
                }
            }
        }
    }
    input_ = in;
    has_cache_ = true;
    (void)H;
    return out;
}

Tensor Conv2dLayer::backward(const Tensor& grad_out, bool want_input_grad) {
    require_cache(has_cache_);
    const auto out_shape = output_shape(input_.shape());
    if (grad_out.shape() != out_shape)
        throw ValidationError("conv2d: gradient shape mismatch");
    const int W = input_.shape()[1];
    const int OH = out_shape[0], OW = out_shape[1];

    Tensor din = want_input_grad ? Tensor(input_.shape()) : Tensor();
    const bool want_param_grad = !frozen;

    const double* ip = input_.data();
    const double* gp = grad_out.data();
    const double* wp = weights.value.data();
    double* dwp = weights.grad.data();
    double* dbp = bias.grad.data();
    double* dip = want_input_grad ? din.data() : nullptr;

    for (int oh = 0; oh < OH; ++oh) {
        for (int ow = 0; ow < OW; ++ow) {
            const double* grow = gp + (static_cast<std::size_t>(oh) * OW + ow) * filters;
            if (want_param_grad)
                for (int oc = 0; oc < filters; ++oc) dbp[oc] += grow[oc];
            for (int r = 0; r < kh; ++r) {
                const int ih = oh * stride + r;
                for (int c = 0; c < kw; ++c) {
                    const int iw = ow * stride + c;
                    const std::size_t in_off =
                        (static_cast<std::size_t>(ih) * W + iw) * in_channels;
                    const std::size_t w_off =
                        (static_cast<std::size_t>(r) * kw + c) * in_channels * filters;
                    for (int ic = 0; ic < in_channels; ++ic) {
                        const std::size_t wrow = w_off + static_cast<std::size_t>(ic) * filters;
                        if (want_param_grad) {
                            const double v = ip[in_off + ic];
                            double* dwrow = dwp + wrow;
                            for (int oc = 0; oc < filters; ++oc) dwrow[oc] += v * grow[oc];
                        }
                        if (want_input_grad) {
                            const double* wr = wp + wrow;
                            double acc = 0.0;
                            for (int oc = 0; oc < filters; ++oc) acc += wr[oc] * grow[oc];
                            dip[in_off + ic] += acc;
                        }
                    }
                }
            }
        }
    }
    return din;
}

std::unique_ptr<Layer> Conv2dLayer::clone() const {
    return std::make_unique<Conv2dLayer>(*this);
}

std::vector<std::size_t> Conv2dLayer::input_channel_weight_indices(int k) const {
    if (k < 0 || k >= in_channels)
        throw ValidationError("conv2d: input channel out of range");
    std::vector<std::size_t> idx;
    idx.reserve(static_cast<std::size_t>(kh) * kw * filters);
    for (int r = 0; r < kh; ++r)
        for (int c = 0; c < kw; ++c) {
            const std::size_t base =
                ((static_cast<std::size_t>(r) * kw + c) * in_channels + k) * filters;
            for (int oc = 0; oc < filters; ++oc) idx.push_back(base + oc);
        }
    return idx;
}

void Conv2dLayer::zero_output_channel_params(int j) {
    if (j < 0 || j >= filters) throw ValidationError("conv2d: filter out of range");
    for (int r = 0; r < kh; ++r)
        for (int c = 0; c < kw; ++c)
            for (int ic = 0; ic < in_channels; ++ic)
                weights.value[((static_cast<std::size_t>(r) * kw + c) * in_channels + ic) *
                                  filters +
                              j] = 0.0;
    bias.value[j] = 0.0;
}

std::size_t Conv2dLayer::params_per_filter() const {
    return static_cast<std::size_t>(kh) * kw * in_channels + 1;
}

void Conv2dLayer::keep_input_channels(const std::vector<int>& kept) {
    Tensor nw({kh, kw, static_cast<int>(kept.size()), filters});
    for (int r = 0; r < kh; ++r)
        for (int c = 0; c < kw; ++c)
            for (std::size_t ni = 0; ni < kept.size(); ++ni)
                for (int oc = 0; oc < filters; ++oc)
                    nw[((static_cast<std::size_t>(r) * kw + c) * kept.size() + ni) * filters +
                       oc] =
                        weights.value[((static_cast<std::size_t>(r) * kw + c) * in_channels +
                                       kept[ni]) *
                                          filters +
                                      oc];
    in_channels = static_cast<int>(kept.size());
    weights = Param("weights", nw);
}

void Conv2dLayer::keep_filters(const std::vector<int>& kept) {
    Tensor nw({kh, kw, in_channels, static_cast<int>(kept.size())});
    Tensor nb({static_cast<int>(kept.size())});
    const std::size_t spatial = static_cast<std::size_t>(kh) * kw * in_channels;
    for (std::size_t s = 0; s < spatial; ++s)
        for (std::size_t no = 0; no < kept.size(); ++no)
            nw[s * kept.size() + no] = weights.value[s * filters + kept[no]];
    for (std::size_t no = 0; no < kept.size(); ++no) nb[no] = bias.value[kept[no]];
    filters = static_cast<int>(kept.size());
    weights = Param("weights", nw);
    bias = Param("bias", nb);
}

// ---------------------------------------------------------------------------
// MaxPool2d: records the flat input index of each window maximum (first hit
// in scan order) so backward can route the gradient unambiguously.

MaxPool2dLayer::MaxPool2dLayer(int pool_, int stride_) : pool(pool_), stride(stride_) {
    if (pool < 1) throw ValidationError("maxpool2d: pool size must be >= 1");
    if (stride < 1) throw ValidationError("maxpool2d: stride must be >= 1");
}

std::vector<int> MaxPool2dLayer::output_shape(const std::vector<int>& in) const {
    check_rank3(in, "maxpool2d");
    if (in[0] < pool || in[1] < pool)
        throw ValidationError("maxpool2d: input smaller than pool window");
    return {(in[0] - pool) / stride + 1, (in[1] - pool) / stride + 1, in[2]};
}

Tensor MaxPool2dLayer::forward(const Tensor& in) {
    const auto out_shape = output_shape(in.shape());
    const int W = in.shape()[1], C = in.shape()[2];
    const int OH = out_shape[0], OW = out_shape[1];
    Tensor out(out_shape);
    argmax_.assign(out.size(), 0);

    const double* ip = in.data();
    double* op = out.data();
    std::size_t o = 0;
    for (int oh = 0; oh < OH; ++oh)
        for (int ow = 0; ow < OW; ++ow)
            for (int ch = 0; ch < C; ++ch, ++o) {
                double best = -std::numeric_limits<double>::infinity();
                std::size_t best_idx = 0;
                for (int r = 0; r < pool; ++r)
                    for (int c = 0; c < pool; ++c) {
                        const std::size_t idx =
                            (static_cast<std::size_t>(oh * stride + r) * W + ow * stride + c) *
                                C +
                            ch;
                        if (ip[idx] > best) {
                            best = ip[idx];
                            best_idx = idx;
                        }
                    }
                op[o] = best;
                argmax_[o] = best_idx;
            }
    input_shape_ = in.shape();
    has_cache_ = true;
    return out;
}

Tensor MaxPool2dLayer::backward(const Tensor& grad_out, bool want_input_grad) {
    require_cache(has_cache_);
    if (grad_out.shape() != output_shape(input_shape_))
        throw ValidationError("maxpool2d: gradient shape mismatch");
    if (!want_input_grad) return Tensor();
    Tensor din(input_shape_);
    const double* gp = grad_out.data();
    for (std::size_t o = 0; o < argmax_.size(); ++o) din[argmax_[o]] += gp[o];
    return din;
}

std::unique_ptr<Layer> MaxPool2dLayer::clone() const {
    return std::make_unique<MaxPool2dLayer>(*this);
}

// ---------------------------------------------------------------------------
// GlobalAvgPool: [H,W,C] -> [C], mean over the spatial grid per channel.

std::vector<int> GlobalAvgPoolLayer::output_shape(const std::vector<int>& in) const {
    check_rank3(in, "globalavgpool");
    if (in[0] < 1 || in[1] < 1)
        throw ValidationError("globalavgpool: empty spatial grid");
    return {in[2]};
}

Tensor GlobalAvgPoolLayer::forward(const Tensor& in) {
    const auto out_shape = output_shape(in.shape());
    const int H = in.shape()[0], W = in.shape()[1], C = in.shape()[2];
    Tensor out(out_shape, 0.0);
    const double* ip = in.data();
    for (int h = 0; h < H; ++h)
        for (int w = 0; w < W; ++w)
            for (int c = 0; c < C; ++c) out[c] += ip[(static_cast<std::size_t>(h) * W + w) * C + c];
    const double inv = 1.0 / (static_cast<double>(H) * W);
    for (int c = 0; c < C; ++c) out[c] *= inv;
    input_shape_ = in.shape();
    has_cache_ = true;
    return out;
}

Tensor GlobalAvgPoolLayer::backward(const Tensor& grad_out, bool want_input_grad) {
    require_cache(has_cache_);
    if (grad_out.shape() != output_shape(input_shape_))
        throw ValidationError("globalavgpool: gradient shape mismatch");
    if (!want_input_grad) return Tensor();
    const int H = input_shape_[0], W = input_shape_[1], C = input_shape_[2];
    const double inv = 1.0 / (static_cast<double>(H) * W);
    Tensor din(input_shape_);
    for (int h = 0; h < H; ++h)
        for (int w = 0; w < W; ++w)
            for (int c = 0; c < C; ++c)
                din[(static_cast<std::size_t>(h) * W + w) * C + c] = grad_out[c] * inv;
    return din;
}

std::unique_ptr<Layer> GlobalAvgPoolLayer::clone() const {
    return std::make_unique<GlobalAvgPoolLayer>(*this);
}

// ---------------------------------------------------------------------------
// Dense: flattens its input implicitly. weights[d, u], row d = input element.

DenseLayer::DenseLayer(int inputs_, int units_, Activation act)
    : inputs(inputs_), units(units_), activation(act),
      weights("weights", Tensor({inputs_, units_})), bias("bias", Tensor({units_})) {
    if (inputs < 0 || units < 0) throw ValidationError("dense: negative dimension");
}

std::vector<int> DenseLayer::output_shape(const std::vector<int>& in) const {
    if (shape_product(in) != static_cast<std::size_t>(inputs))
        throw ValidationError("dense: expected " + std::to_string(inputs) +
                              " inputs, got " + std::to_string(shape_product(in)));
    return {units};
}

Tensor DenseLayer::forward(const Tensor& in) {
    (void)output_shape(in.shape());
    Tensor out({units});
    const double* ip = in.data();
    const double* wp = weights.value.data();
    for (int u = 0; u < units; ++u) out[u] = bias.value[u];
    for (int d = 0; d < inputs; ++d) {
        const double v = ip[d];
        const double* wrow = wp + static_cast<std::size_t>(d) * units;
        for (int u = 0; u < units; ++u) out[u] += v * wrow[u];
    }
    for (int u = 0; u < units; ++u) out[u] = apply_activation(activation, out[u]);
    input_ = Tensor({inputs}, in.raw());
    output_ = out;
    has_cache_ = true;
    return out;
}

Tensor DenseLayer::backward(const Tensor& grad_out, bool want_input_grad) {
    require_cache(has_cache_);
    if (grad_out.shape() != std::vector<int>{units})
        throw ValidationError("dense: gradient shape mismatch");

    std::vector<double> dpre(static_cast<std::size_t>(units));
    for (int u = 0; u < units; ++u)
        dpre[u] = grad_out[u] * activation_deriv_from_output(activation, output_[u]);

    if (!frozen) {
        for (int d = 0; d < inputs; ++d) {
            const double v = input_[d];
            double* dwrow = weights.grad.data() + static_cast<std::size_t>(d) * units;
            for (int u = 0; u < units; ++u) dwrow[u] += v * dpre[u];
        }
        for (int u = 0; u < units; ++u) bias.grad[u] += dpre[u];
    }
    if (!want_input_grad) return Tensor();
    Tensor din({inputs});
    const double* wp = weights.value.data();
    for (int d = 0; d < inputs; ++d) {
        const double* wrow = wp + static_cast<std::size_t>(d) * units;
        double acc = 0.0;
        for (int u = 0; u < units; ++u) acc += wrow[u] * dpre[u];
        din[d] = acc;
    }
    return din;
}

std::unique_ptr<Layer> DenseLayer::clone() const {
    return std::make_unique<DenseLayer>(*this);
}

std::vector<std::size_t> DenseLayer::input_channel_weight_indices(int k) const {
    return input_row_weight_indices(k);
}

std::vector<std::size_t> DenseLayer::input_row_weight_indices(int row) const {
    if (row < 0 || row >= inputs) throw ValidationError("dense: input row out of range");
    std::vector<std::size_t> idx(static_cast<std::size_t>(units));
    for (int u = 0; u < units; ++u) idx[u] = static_cast<std::size_t>(row) * units + u;
    return idx;
}

void DenseLayer::zero_output_channel_params(int j) {
    if (j < 0 || j >= units) throw ValidationError("dense: unit out of range");
    for (int d = 0; d < inputs; ++d)
        weights.value[static_cast<std::size_t>(d) * units + j] = 0.0;
    bias.value[j] = 0.0;
}

void DenseLayer::keep_input_rows(const std::vector<int>& kept) {
    Tensor nw({static_cast<int>(kept.size()), units});
    for (std::size_t nd = 0; nd < kept.size(); ++nd)
        for (int u = 0; u < units; ++u)
            nw[nd * units + u] = weights.value[static_cast<std::size_t>(kept[nd]) * units + u];
    inputs = static_cast<int>(kept.size());
    weights = Param("weights", nw);
}

void DenseLayer::keep_units(const std::vector<int>& kept) {
    Tensor nw({inputs, static_cast<int>(kept.size())});
    Tensor nb({static_cast<int>(kept.size())});
    for (int d = 0; d < inputs; ++d)
        for (std::size_t nu = 0; nu < kept.size(); ++nu)
            nw[static_cast<std::size_t>(d) * kept.size() + nu] =
                weights.value[static_cast<std::size_t>(d) * units + kept[nu]];
    for (std::size_t nu = 0; nu < kept.size(); ++nu) nb[nu] = bias.value[kept[nu]];
    units = static_cast<int>(kept.size());
    weights = Param("weights", nw);
    bias = Param("bias", nb);
}

// ---------------------------------------------------------------------------

Tensor ActivationLayer::forward(const Tensor& in) {
    Tensor out = in;
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = apply_activation(activation, out[i]);
    output_ = out;
    has_cache_ = true;
    return out;
}

Tensor ActivationLayer::backward(const Tensor& grad_out, bool want_input_grad) {
    require_cache(has_cache_);
    if (grad_out.shape() != output_.shape())
        throw ValidationError("activation: gradient shape mismatch");
    if (!want_input_grad) return Tensor();
    Tensor din = grad_out;
    for (std::size_t i = 0; i < din.size(); ++i)
        din[i] *= activation_deriv_from_output(activation, output_[i]);
    return din;
}

std::unique_ptr<Layer> ActivationLayer::clone() const {
    return std::make_unique<ActivationLayer>(*this);
}

// ---------------------------------------------------------------------------

GateLayer::GateLayer(int channels_)
    : channels(channels_), beta("beta", Tensor({channels_}, 1.0)) {
    if (channels < 0) throw ValidationError("gate: negative channel count");
}

std::vector<int> GateLayer::output_shape(const std::vector<int>& in) const {
    if (in.empty() || in.back() != channels)
        throw ValidationError("gate: expected trailing channel dim " +
                              std::to_string(channels));
    return in;
}

Tensor GateLayer::forward(const Tensor& in) {
    (void)output_shape(in.shape());
    Tensor out = in;
    double* op = out.data();
    const std::size_t n = out.size();
    for (std::size_t i = 0; i < n; ++i) op[i] *= beta.value[i % channels];
    input_ = in;
    has_cache_ = true;
    return out;
}

Tensor GateLayer::backward(const Tensor& grad_out, bool want_input_grad) {
    require_cache(has_cache_);
    if (grad_out.shape() != input_.shape())
        throw ValidationError("gate: gradient shape mismatch");
    const std::size_t n = input_.size();
    const double* gp = grad_out.data();
    const double* ip = input_.data();
    if (!frozen)
        for (std::size_t i = 0; i < n; ++i) beta.grad[i % channels] += gp[i] * ip[i];
    if (!want_input_grad) return Tensor();
    Tensor din(input_.shape());
    for (std::size_t i = 0; i < n; ++i) din[i] = gp[i] * beta.value[i % channels];
    return din;
}

std::unique_ptr<Layer> GateLayer::clone() const {
    return std::make_unique<GateLayer>(*this);
}

void GateLayer::keep_channels(const std::vector<int>& kept) {
    Tensor nb({static_cast<int>(kept.size())});
    for (std::size_t i = 0; i < kept.size(); ++i) nb[i] = beta.value[kept[i]];
    channels = static_cast<int>(kept.size());
    beta = Param("beta", nb);
}

}  // namespace sor::nn
