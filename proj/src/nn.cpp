#include "tensorshield/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "tensorshield/rng.hpp"
#include "tensorshield/thread_pool.hpp"

namespace ts {

namespace {

void require(bool ok, const char* msg) {
    if (!ok) throw std::invalid_argument(msg);
}

struct Hwc {
    std::size_t h, w, c;
};

Hwc as_hwc(const Tensor& t, const char* msg) {
    require(t.order() == 3, msg);
    return {t.shape[0], t.shape[1], t.shape[2]};
}

// ---- layer kernels ----------------------------------------------------

void conv2d_forward(const double* in, Hwc d, const double* wts, const double* bias,
                    std::size_t oc, double* out) {
    const std::size_t h = d.h, w = d.w, ic = d.c;
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            double* opix = out + (y * w + x) * oc;
            std::memcpy(opix, bias, oc * sizeof(double));
            const std::size_t ky0 = (y == 0) ? 1 : 0, ky1 = (y == h - 1) ? 2 : 3;
            const std::size_t kx0 = (x == 0) ? 1 : 0, kx1 = (x == w - 1) ? 2 : 3;
            for (std::size_t ky = ky0; ky < ky1; ++ky) {
                const std::size_t yy = y + ky - 1;
                for (std::size_t kx = kx0; kx < kx1; ++kx) {
                    const std::size_t xx = x + kx - 1;
                    const double* ipix = in + (yy * w + xx) * ic;
                    const double* wbase = wts + (ky * 3 + kx) * ic * oc;
                    for (std::size_t i = 0; i < ic; ++i) {
                        const double v = ipix[i];
                        const double* wrow = wbase + i * oc;
                        for (std::size_t o = 0; o < oc; ++o) opix[o] += v * wrow[o];
                    }
                }
            }
        }
    }
}

// dgrad: gradient w.r.t. the conv output. Accumulates into dw/db (when given)
// and din (when given); buffers must be pre-zeroed by the caller.
void conv2d_backward(const double* in, Hwc d, const double* wts, std::size_t oc,
                     const double* dgrad, double* dw, double* db, double* din) {
    const std::size_t h = d.h, w = d.w, ic = d.c;
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            const double* gpix = dgrad + (y * w + x) * oc;
            if (db)
                for (std::size_t o = 0; o < oc; ++o) db[o] += gpix[o];
            const std::size_t ky0 = (y == 0) ? 1 : 0, ky1 = (y == h - 1) ? 2 : 3;
            const std::size_t kx0 = (x == 0) ? 1 : 0, kx1 = (x == w - 1) ? 2 : 3;
            for (std::size_t ky = ky0; ky < ky1; ++ky) {
                const std::size_t yy = y + ky - 1;
                for (std::size_t kx = kx0; kx < kx1; ++kx) {
                    const std::size_t xx = x + kx - 1;
                    const double* ipix = in + (yy * w + xx) * ic;
                    double* dpix = din ? din + (yy * w + xx) * ic : nullptr;
                    const std::size_t base = (ky * 3 + kx) * ic * oc;
                    for (std::size_t i = 0; i < ic; ++i) {
                        const double v = ipix[i];
                        const double* wrow = wts + base + i * oc;
                        double acc = 0.0;
                        if (dw) {
                            double* dwrow = dw + base + i * oc;
                            for (std::size_t o = 0; o < oc; ++o) {
                                dwrow[o] += v * gpix[o];
                                acc += wrow[o] * gpix[o];
                            }
                        } else {
                            for (std::size_t o = 0; o < oc; ++o) acc += wrow[o] * gpix[o];
                        }
                        if (dpix) dpix[i] += acc;
                    }
                }
            }
        }
    }
}

void elu_forward(const double* in, std::size_t n, double* out) {
    for (std::size_t i = 0; i < n; ++i) out[i] = in[i] > 0.0 ? in[i] : std::expm1(in[i]);
}

// Uses the stored output: for x <= 0, elu'(x) = exp(x) = out + 1.
void elu_backward(const double* out, std::size_t n, const double* dgrad, double* din) {
    for (std::size_t i = 0; i < n; ++i)
        din[i] = out[i] > 0.0 ? dgrad[i] : dgrad[i] * (out[i] + 1.0);
}

void maxpool_forward(const double* in, Hwc d, double* out, std::uint8_t* argmax) {
    const std::size_t oh = d.h / 2, ow = d.w / 2, c = d.c;
    for (std::size_t y = 0; y < oh; ++y) {
        for (std::size_t x = 0; x < ow; ++x) {
            for (std::size_t ch = 0; ch < c; ++ch) {
                double best = -1e300;
                std::uint8_t arg = 0;
                for (std::uint8_t k = 0; k < 4; ++k) {
                    const std::size_t yy = 2 * y + (k >> 1), xx = 2 * x + (k & 1);
                    const double v = in[(yy * d.w + xx) * c + ch];
                    if (v > best) {
                        best = v;
                        arg = k;
                    }
                }
                const std::size_t oi = (y * ow + x) * c + ch;
                out[oi] = best;
                argmax[oi] = arg;
            }
        }
    }
}

void maxpool_backward(Hwc d, const std::uint8_t* argmax, const double* dgrad, double* din) {
    const std::size_t oh = d.h / 2, ow = d.w / 2, c = d.c;
    for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t x = 0; x < ow; ++x)
            for (std::size_t ch = 0; ch < c; ++ch) {
                const std::size_t oi = (y * ow + x) * c + ch;
                const std::uint8_t k = argmax[oi];
                const std::size_t yy = 2 * y + (k >> 1), xx = 2 * x + (k & 1);
                din[(yy * d.w + xx) * c + ch] += dgrad[oi];
            }
}

void dense_forward(const double* in, std::size_t ni, const double* wts, const double* bias,
                   std::size_t no, double* out) {
    std::memcpy(out, bias, no * sizeof(double));
    for (std::size_t i = 0; i < ni; ++i) {
        const double v = in[i];
        const double* wrow = wts + i * no;
        for (std::size_t o = 0; o < no; ++o) out[o] += v * wrow[o];
    }
}

void dense_backward(const double* in, std::size_t ni, const double* wts, std::size_t no,
                    const double* dgrad, double* dw, double* db, double* din) {
    if (db)
        for (std::size_t o = 0; o < no; ++o) db[o] += dgrad[o];
    for (std::size_t i = 0; i < ni; ++i) {
        const double* wrow = wts + i * no;
        double acc = 0.0;
        if (dw) {
            double* dwrow = dw + i * no;
            const double v = in[i];
            for (std::size_t o = 0; o < no; ++o) {
                dwrow[o] += v * dgrad[o];
                acc += wrow[o] * dgrad[o];
            }
        } else {
            for (std::size_t o = 0; o < no; ++o) acc += wrow[o] * dgrad[o];
        }
        if (din) din[i] = acc;
    }
}

std::vector<std::size_t> layer_output_shape(const LayerSpec& spec,
                                            const std::vector<std::size_t>& in) {
    switch (spec.kind) {
        case LayerKind::conv2d: {
            require(in.size() == 3 && in[2] == spec.in_channels,
                    "conv2d: input shape mismatch");
            return {in[0], in[1], spec.out_channels};
        }
        case LayerKind::elu:
            return in;
        case LayerKind::maxpool2x2: {
            require(in.size() == 3 && in[0] % 2 == 0 && in[1] % 2 == 0,
                    "maxpool2x2: spatial dims must be even");
            return {in[0] / 2, in[1] / 2, in[2]};
        }
        case LayerKind::flatten: {
            return {shape_numel(in)};
        }
        case LayerKind::dense: {
            require(in.size() == 1 && in[0] == spec.in_features,
                    "dense: input features mismatch");
            return {spec.out_features};
        }
    }
    throw std::invalid_argument("unknown layer kind");
}

}  // namespace

std::size_t layer_param_count(const LayerSpec& spec) {
    switch (spec.kind) {
        case LayerKind::conv2d:
            return 9 * spec.in_channels * spec.out_channels + spec.out_channels;
        case LayerKind::dense:
            return spec.in_features * spec.out_features + spec.out_features;
        default:
            return 0;
    }
}

Network make_network(std::vector<LayerSpec> layers, NetworkPurpose purpose) {
    require(!layers.empty(), "make_network: empty layer list");
    // Channel/feature chaining: convs must agree with the previous conv's
    // output; a dense layer after a dense must consume its out_features.
    std::size_t channels = 0, features = 0;
    for (const LayerSpec& spec : layers) {
        if (spec.kind == LayerKind::conv2d) {
            require(spec.in_channels > 0 && spec.out_channels > 0,
                    "make_network: conv needs channel counts");
            require(channels == 0 || channels == spec.in_channels,
                    "make_network: conv input channels do not chain");
            require(features == 0, "make_network: conv after flatten");
            channels = spec.out_channels;
        } else if (spec.kind == LayerKind::dense) {
            require(spec.in_features > 0 && spec.out_features > 0,
                    "make_network: dense needs feature counts");
            require(features == 0 || features == spec.in_features,
                    "make_network: dense input features do not chain");
            features = spec.out_features;
        } else if (spec.kind == LayerKind::flatten) {
            features = 0;  // size known only at run time
        }
    }
    Network net;
    net.layers = std::move(layers);
    net.purpose = purpose;
    net.offsets.resize(net.layers.size());
    std::size_t total = 0;
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        net.offsets[i] = total;
        total += layer_param_count(net.layers[i]);
    }
    net.params.assign(total, 0.0);
    return net;
}

void init_params(Network& net, std::uint64_t seed) {
    Rng rng(seed);
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        const LayerSpec& spec = net.layers[i];
        double* p = net.params.data() + net.offsets[i];
        if (spec.kind == LayerKind::conv2d) {
            const std::size_t nw = 9 * spec.in_channels * spec.out_channels;
            const double std = std::sqrt(2.0 / (9.0 * static_cast<double>(spec.in_channels)));
            for (std::size_t k = 0; k < nw; ++k) p[k] = std * rng.gaussian();
            std::fill(p + nw, p + nw + spec.out_channels, 0.0);
        } else if (spec.kind == LayerKind::dense) {
            const std::size_t nw = spec.in_features * spec.out_features;
            const double std = std::sqrt(2.0 / static_cast<double>(spec.in_features));
            for (std::size_t k = 0; k < nw; ++k) p[k] = std * rng.gaussian();
            std::fill(p + nw, p + nw + spec.out_features, 0.0);
        }
    }
}

Network make_classifier(std::size_t height, std::size_t width, std::size_t channels,
                        std::size_t classes) {
    require(height % 4 == 0 && width % 4 == 0,
            "make_classifier: spatial dims must be divisible by 4");
    const std::size_t flat = (height / 4) * (width / 4) * 32;
    std::vector<LayerSpec> layers = {
        {LayerKind::conv2d, channels, 16, 0, 0},
        {LayerKind::elu},
        {LayerKind::maxpool2x2},
        {LayerKind::conv2d, 16, 32, 0, 0},
        {LayerKind::elu},
        {LayerKind::maxpool2x2},
        {LayerKind::flatten},
        {LayerKind::dense, 0, 0, flat, classes},
    };
    return make_network(std::move(layers), NetworkPurpose::classifier);
}

Network make_autoencoder(std::size_t channels) {
    static constexpr std::size_t schedule[] = {1, 2, 4, 8, 16, 32, 16, 8, 4, 2, 1};
    std::vector<LayerSpec> layers;
    for (std::size_t i = 0; i + 1 < std::size(schedule); ++i) {
        layers.push_back(
            {LayerKind::conv2d, schedule[i] * channels, schedule[i + 1] * channels, 0, 0});
        if (i + 2 < std::size(schedule)) layers.push_back({LayerKind::elu});
    }
    return make_network(std::move(layers), NetworkPurpose::autoencoder);
}

ForwardTrace forward_trace(const Network& net, const Tensor& x) {
    require(all_finite(x), "forward: non-finite input");
    ForwardTrace trace;
    trace.activations.reserve(net.layers.size() + 1);
    trace.activations.push_back(x);
    trace.pool_argmax.resize(net.layers.size());
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        const LayerSpec& spec = net.layers[i];
        const Tensor& in = trace.activations.back();
        Tensor out(layer_output_shape(spec, in.shape));
        const double* p = net.params.data() + net.offsets[i];
        switch (spec.kind) {
            case LayerKind::conv2d: {
                Hwc d = as_hwc(in, "conv2d: rank-3 input required");
                conv2d_forward(in.data.data(), d, p,
                               p + 9 * spec.in_channels * spec.out_channels,
                               spec.out_channels, out.data.data());
                break;
            }
            case LayerKind::elu:
                elu_forward(in.data.data(), in.numel(), out.data.data());
                break;
            case LayerKind::maxpool2x2: {
                Hwc d = as_hwc(in, "maxpool2x2: rank-3 input required");
                trace.pool_argmax[i].resize(out.numel());
                maxpool_forward(in.data.data(), d, out.data.data(),
                                trace.pool_argmax[i].data());
                break;
            }
            case LayerKind::flatten:
                out.data = in.data;
                break;
            case LayerKind::dense:
                dense_forward(in.data.data(), spec.in_features, p,
                              p + spec.in_features * spec.out_features, spec.out_features,
                              out.data.data());
                break;
        }
        trace.activations.push_back(std::move(out));
    }
    return trace;
}

Tensor forward(const Network& net, const Tensor& x) {
    ForwardTrace trace = forward_trace(net, x);
    return std::move(trace.activations.back());
}

std::size_t predict(const Network& net, const Tensor& x) {
    const Tensor logits = forward(net, x);
    return static_cast<std::size_t>(
        std::max_element(logits.data.begin(), logits.data.end()) - logits.data.begin());
}

Tensor one_hot(std::size_t label, std::size_t classes) {
    require(label < classes, "one_hot: label out of range");
    Tensor t({classes});
    t.data[label] = 1.0;
    return t;
}

namespace {

// Shared backward walk. cotangent is d(objective)/d(output); fills
// param_grads (accumulating) and/or returns the input gradient.
Tensor backprop(const Network& net, const ForwardTrace& trace, Tensor cotangent,
                std::vector<double>* param_grads) {
    for (std::size_t i = net.layers.size(); i-- > 0;) {
        const LayerSpec& spec = net.layers[i];
        const Tensor& in = trace.activations[i];
        const Tensor& out = trace.activations[i + 1];
        require(cotangent.numel() == out.numel(), "backprop: cotangent shape mismatch");
        Tensor din(in.shape);
        const double* p = net.params.data() + net.offsets[i];
        double* g = param_grads ? param_grads->data() + net.offsets[i] : nullptr;
        switch (spec.kind) {
            case LayerKind::conv2d: {
                Hwc d = as_hwc(in, "conv2d: rank-3 input required");
                double* dw = g;
                double* db = g ? g + 9 * spec.in_channels * spec.out_channels : nullptr;
                conv2d_backward(in.data.data(), d, p, spec.out_channels,
                                cotangent.data.data(), dw, db, din.data.data());
                break;
            }
            case LayerKind::elu:
                elu_backward(out.data.data(), out.numel(), cotangent.data.data(),
                             din.data.data());
                break;
            case LayerKind::maxpool2x2: {
                Hwc d = as_hwc(in, "maxpool2x2: rank-3 input required");
                maxpool_backward(d, trace.pool_argmax[i].data(), cotangent.data.data(),
                                 din.data.data());
                break;
            }
            case LayerKind::flatten:
                din.data = cotangent.data;
                break;
            case LayerKind::dense: {
                double* dw = g;
                double* db = g ? g + spec.in_features * spec.out_features : nullptr;
                dense_backward(in.data.data(), spec.in_features, p, spec.out_features,
                               cotangent.data.data(), dw, db, din.data.data());
                break;
            }
        }
        cotangent = std::move(din);
    }
    return cotangent;
}

// Returns (loss, d loss / d output) for the given target.
std::pair<double, Tensor> loss_and_cotangent(const Tensor& output, const Tensor& target,
                                             LossKind kind) {
    require(output.numel() == target.numel(), "loss: target shape mismatch");
    if (kind == LossKind::mean_squared_error) {
        Tensor cot(output.shape);
        const double inv = 1.0 / static_cast<double>(output.numel());
        double loss = 0.0;
        for (std::size_t i = 0; i < output.numel(); ++i) {
            const double d = output.data[i] - target.data[i];
            loss += d * d;
            cot.data[i] = 2.0 * d * inv;
        }
        return {loss * inv, std::move(cot)};
    }
    // Softmax cross-entropy: loss = logsumexp(z) - sum_i target_i z_i for a
    // target distribution summing to 1; gradient = softmax(z) - target.
    const double zmax = *std::max_element(output.data.begin(), output.data.end());
    double sum = 0.0;
    for (double z : output.data) sum += std::exp(z - zmax);
    const double lse = zmax + std::log(sum);
    double loss = lse;
    Tensor cot(output.shape);
    for (std::size_t i = 0; i < output.numel(); ++i) {
        loss -= target.data[i] * output.data[i];
        cot.data[i] = std::exp(output.data[i] - lse) - target.data[i];
    }
    return {loss, std::move(cot)};
}

}  // namespace

double backward_accumulate(const Network& net, const Tensor& x, const Tensor& target,
                           LossKind loss, std::vector<double>& grad_accum) {
    require(grad_accum.size() == net.params.size(), "backward: gradient buffer size mismatch");
    ForwardTrace trace = forward_trace(net, x);
    auto [value, cot] = loss_and_cotangent(trace.activations.back(), target, loss);
    backprop(net, trace, std::move(cot), &grad_accum);
    return value;
}

BackwardResult backward(const Network& net, const Tensor& x, const Tensor& target,
                        LossKind loss) {
    BackwardResult res;
    res.param_grads.assign(net.params.size(), 0.0);
    ForwardTrace trace = forward_trace(net, x);
    auto [value, cot] = loss_and_cotangent(trace.activations.back(), target, loss);
    res.loss = value;
    res.input_grad = backprop(net, trace, std::move(cot), &res.param_grads);
    return res;
}

Tensor vjp_input(const Network& net, const ForwardTrace& trace, const Tensor& cotangent) {
    return backprop(net, trace, cotangent, nullptr);
}

AdamState make_adam_state(std::size_t n_params, double lr) {
    AdamState st;
    st.first_moment.assign(n_params, 0.0);
    st.second_moment.assign(n_params, 0.0);
    st.lr = lr;
    return st;
}

void adam_step(Network& net, const std::vector<double>& grads, AdamState& state) {
    require(grads.size() == net.params.size(), "adam_step: gradient length mismatch");
    require(state.first_moment.size() == net.params.size(), "adam_step: state length mismatch");
    state.step_count += 1;
    const double t = static_cast<double>(state.step_count);
    const double c1 = 1.0 - std::pow(state.beta1, t);
    const double c2 = 1.0 - std::pow(state.beta2, t);
    for (std::size_t i = 0; i < grads.size(); ++i) {
        double& m = state.first_moment[i];
        double& v = state.second_moment[i];
        m = state.beta1 * m + (1.0 - state.beta1) * grads[i];
        v = state.beta2 * v + (1.0 - state.beta2) * grads[i] * grads[i];
        net.params[i] -= state.lr * (m / c1) / (std::sqrt(v / c2) + state.eps);
    }
}

namespace {

// Minibatch SGD loop shared by both trainers. Batch gradients are summed
// into fixed slots and merged in slot order, so results do not depend on
// the worker count.
double run_training(Network& net, const std::vector<const Tensor*>& inputs,
                    const std::vector<const Tensor*>& targets, LossKind loss,
                    std::size_t epochs, double lr, std::size_t batch, std::uint64_t seed,
                    const TrainOptions& opts, const char* tag) {
    const std::size_t n = inputs.size();
    require(n > 0, "train: empty dataset");
    require(batch >= 1 && epochs >= 1, "train: invalid schedule");
    AdamState adam = make_adam_state(net.params.size(), lr);
    const std::size_t workers = std::max<std::size_t>(1, opts.workers);
    // Gradients are summed into a fixed number of slots whose batch slices
    // depend only on the batch size; workers grab whole slots. The merged
    // sum is therefore bitwise identical for any worker count.
    const std::size_t slots = 16;
    std::vector<std::vector<double>> slot_grads(slots,
                                                std::vector<double>(net.params.size(), 0.0));
    std::vector<double> slot_loss(slots, 0.0);
    std::vector<double> grads(net.params.size());
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    double epoch_loss = 0.0;

    for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
        Rng shuffler(mix_seed(seed ^ (0x5eedULL + epoch)));
        shuffler.shuffle(order);
        epoch_loss = 0.0;
        for (std::size_t start = 0; start < n; start += batch) {
            const std::size_t count = std::min(batch, n - start);
            for (std::size_t s = 0; s < slots; ++s) {
                std::fill(slot_grads[s].begin(), slot_grads[s].end(), 0.0);
                slot_loss[s] = 0.0;
            }
            parallel_for(slots, workers, [&](std::size_t s) {
                const std::size_t lo = count * s / slots;
                const std::size_t hi = count * (s + 1) / slots;
                for (std::size_t k = lo; k < hi; ++k) {
                    const std::size_t idx = order[start + k];
                    slot_loss[s] += backward_accumulate(net, *inputs[idx], *targets[idx],
                                                        loss, slot_grads[s]);
                }
            });
            std::fill(grads.begin(), grads.end(), 0.0);
            double batch_loss = 0.0;
            for (std::size_t s = 0; s < slots; ++s) {
                batch_loss += slot_loss[s];
                const std::vector<double>& sg = slot_grads[s];
                for (std::size_t i = 0; i < grads.size(); ++i) grads[i] += sg[i];
            }
            const double inv = 1.0 / static_cast<double>(count);
            for (double& g : grads) g *= inv;
            adam_step(net, grads, adam);
            epoch_loss += batch_loss;
        }
        epoch_loss /= static_cast<double>(n);
        if (opts.progress)
            (*opts.progress) << tag << " epoch " << (epoch + 1) << "/" << epochs
                             << " loss " << epoch_loss << "\n";
    }
    return epoch_loss;
}

}  // namespace

Network train_classifier(const LabeledDataset& train_set, std::size_t epochs, double lr,
                         std::size_t batch, std::uint64_t seed, const TrainOptions& opts) {
    require(!train_set.images.empty(), "train_classifier: empty dataset");
    require(train_set.images.size() == train_set.labels.size(),
            "train_classifier: image/label count mismatch");
    const Tensor& first = train_set.images.front();
    require(first.order() == 3, "train_classifier: images must be H x W x C");
    Network net = make_classifier(first.shape[0], first.shape[1], first.shape[2],
                                  train_set.class_count);
    init_params(net, mix_seed(seed ^ 0xC1A55ULL));

    std::vector<Tensor> targets;
    targets.reserve(train_set.size());
    for (std::size_t label : train_set.labels)
        targets.push_back(one_hot(label, train_set.class_count));
    std::vector<const Tensor*> xs(train_set.size());
    std::vector<const Tensor*> ys(train_set.size());
    for (std::size_t i = 0; i < train_set.size(); ++i) {
        xs[i] = &train_set.images[i];
        ys[i] = &targets[i];
    }
    run_training(net, xs, ys, LossKind::cross_entropy_with_softmax, epochs, lr, batch, seed,
                 opts, "classifier");
    return net;
}

Network train_autoencoder(const std::vector<Tensor>& clean_set,
                          const std::function<Tensor(const Tensor&, std::size_t)>& corruptor,
                          std::size_t epochs, std::uint64_t seed, const TrainOptions& opts) {
    require(!clean_set.empty(), "train_autoencoder: empty dataset");
    const Tensor& first = clean_set.front();
    require(first.order() == 3, "train_autoencoder: images must be H x W x C");
    Network net = make_autoencoder(first.shape[2]);
    init_params(net, mix_seed(seed ^ 0xAE0ULL));

    // Corruptions are fixed up front: the expensive part of the pair is the
    // decomposition, and one corruption per image is enough for the
    // reconstruction-artifact statistics to transfer.
    std::vector<Tensor> corrupted(clean_set.size());
    const std::size_t workers = std::max<std::size_t>(1, opts.workers);
    parallel_for(clean_set.size(), workers,
                 [&](std::size_t i) { corrupted[i] = corruptor(clean_set[i], i); });

    std::vector<const Tensor*> xs(clean_set.size());
    std::vector<const Tensor*> ys(clean_set.size());
    for (std::size_t i = 0; i < clean_set.size(); ++i) {
        xs[i] = &corrupted[i];
        ys[i] = &clean_set[i];
    }
    run_training(net, xs, ys, LossKind::mean_squared_error, epochs, 1e-4, 64, seed, opts,
                 "autoencoder");
    return net;
}

Network train_denoising_autoencoder(const std::vector<Tensor>& clean_set, double noise_sigma,
                                    std::size_t epochs, std::uint64_t seed,
                                    const TrainOptions& opts) {
    require(noise_sigma >= 0.0, "train_denoising_autoencoder: noise_sigma must be >= 0");
    auto corruptor = [noise_sigma, seed](const Tensor& x, std::size_t i) {
        Rng rng(mix_seed(seed ^ (0xC0BBULL + i)));
        Tensor noisy = x;
        for (double& v : noisy.data) v += noise_sigma * rng.gaussian();
        return clamp(noisy, 0.0, 1.0);
    };
    return train_autoencoder(clean_set, corruptor, epochs, seed, opts);
}

// ---- checkpoints -------------------------------------------------------

namespace {

void put_u32(std::string& buf, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& buf, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(const std::string& buf, std::size_t& pos) {
    if (pos + 4 > buf.size()) throw std::runtime_error("checkpoint: truncated file");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
        v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
    pos += 4;
    return v;
}

std::uint64_t get_u64(const std::string& buf, std::size_t& pos) {
    if (pos + 8 > buf.size()) throw std::runtime_error("checkpoint: truncated file");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
        v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
    pos += 8;
    return v;
}

const char* kind_name(LayerKind k) {
    switch (k) {
        case LayerKind::conv2d: return "conv2d";
        case LayerKind::elu: return "elu";
        case LayerKind::maxpool2x2: return "maxpool2x2";
        case LayerKind::flatten: return "flatten";
        case LayerKind::dense: return "dense";
    }
    return "?";
}

}  // namespace

void save_network(const Network& net, const std::string& path, const CheckpointMeta& meta) {
    std::string buf;
    buf.append("TSHD", 4);
    put_u32(buf, 1);  // format version
    put_u32(buf, static_cast<std::uint32_t>(net.purpose));
    put_u32(buf, static_cast<std::uint32_t>(net.layers.size()));
    for (const LayerSpec& l : net.layers) {
        put_u32(buf, static_cast<std::uint32_t>(l.kind));
        put_u64(buf, l.in_channels);
        put_u64(buf, l.out_channels);
        put_u64(buf, l.in_features);
        put_u64(buf, l.out_features);
    }
    put_u64(buf, net.params.size());
    for (double p : net.params) {
        std::uint64_t bits;
        std::memcpy(&bits, &p, 8);
        put_u64(buf, bits);
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("checkpoint: cannot open for writing: " + path);
    f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!f) throw std::runtime_error("checkpoint: write failed: " + path);
    f.close();

    nlohmann::json manifest;
    manifest["format"] = "tensorshield-checkpoint";
    manifest["version"] = 1;
    manifest["purpose"] =
        net.purpose == NetworkPurpose::classifier ? "classifier" : "autoencoder";
    manifest["seed"] = meta.seed;
    manifest["epochs"] = meta.epochs;
    manifest["final_loss"] = meta.final_loss;
    manifest["param_count"] = net.params.size();
    nlohmann::json arch = nlohmann::json::array();
    for (const LayerSpec& l : net.layers) {
        nlohmann::json j;
        j["kind"] = kind_name(l.kind);
        if (l.kind == LayerKind::conv2d) {
            j["in_channels"] = l.in_channels;
            j["out_channels"] = l.out_channels;
        } else if (l.kind == LayerKind::dense) {
            j["in_features"] = l.in_features;
            j["out_features"] = l.out_features;
        }
        arch.push_back(j);
    }
    manifest["architecture"] = arch;
    if (!meta.run.is_null()) manifest["run"] = meta.run;
    std::ofstream mf(path + ".json", std::ios::trunc);
    if (!mf) throw std::runtime_error("checkpoint: cannot write manifest: " + path + ".json");
    mf << manifest.dump(2) << "\n";
}

Network load_network(const std::string& path, CheckpointMeta* meta) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("checkpoint: cannot open: " + path);
    std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    if (buf.size() < 4 || buf.compare(0, 4, "TSHD") != 0)
        throw std::runtime_error("checkpoint: bad magic (expected TSHD): " + path);
    std::size_t pos = 4;
    const std::uint32_t version = get_u32(buf, pos);
    if (version != 1)
        throw std::runtime_error("checkpoint: unsupported version: " + path);
    const std::uint32_t purpose = get_u32(buf, pos);
    if (purpose > 1) throw std::runtime_error("checkpoint: bad purpose tag: " + path);
    const std::uint32_t layer_count = get_u32(buf, pos);
    std::vector<LayerSpec> layers;
    layers.reserve(layer_count);
    for (std::uint32_t i = 0; i < layer_count; ++i) {
        LayerSpec l;
        const std::uint32_t kind = get_u32(buf, pos);
        if (kind > 4) throw std::runtime_error("checkpoint: bad layer kind: " + path);
        l.kind = static_cast<LayerKind>(kind);
        l.in_channels = get_u64(buf, pos);
        l.out_channels = get_u64(buf, pos);
        l.in_features = get_u64(buf, pos);
        l.out_features = get_u64(buf, pos);
        layers.push_back(l);
    }
    Network net = make_network(std::move(layers), static_cast<NetworkPurpose>(purpose));
    const std::uint64_t n_params = get_u64(buf, pos);
    if (n_params != net.params.size())
        throw std::runtime_error("checkpoint: parameter count mismatch: " + path);
    for (std::uint64_t i = 0; i < n_params; ++i) {
        const std::uint64_t bits = get_u64(buf, pos);
        std::memcpy(&net.params[i], &bits, 8);
    }
    if (pos != buf.size()) throw std::runtime_error("checkpoint: trailing bytes: " + path);
    if (meta) {
        *meta = CheckpointMeta{};
        std::ifstream mf(path + ".json");
        if (mf) {
            nlohmann::json manifest = nlohmann::json::parse(mf, nullptr, false);
            if (!manifest.is_discarded()) {
                meta->seed = manifest.value("seed", std::uint64_t{0});
                meta->epochs = manifest.value("epochs", std::size_t{0});
                meta->final_loss = manifest.value("final_loss", 0.0);
            }
        }
    }
    return net;
}

}  // namespace ts
