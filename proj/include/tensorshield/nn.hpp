#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "tensorshield/data_io.hpp"
#include "tensorshield/tensor.hpp"

namespace ts {

enum class LayerKind : std::uint32_t { conv2d = 0, elu = 1, maxpool2x2 = 2, flatten = 3, dense = 4 };

// conv2d is fixed 3x3, stride 1, padding 1; dense is a full affine map.
struct LayerSpec {
    LayerKind kind;
    std::size_t in_channels = 0;
    std::size_t out_channels = 0;
    std::size_t in_features = 0;
    std::size_t out_features = 0;
};

enum class NetworkPurpose : std::uint32_t { classifier = 0, autoencoder = 1 };

struct Network {
    std::vector<LayerSpec> layers;
    std::vector<double> params;         // all layers concatenated
    std::vector<std::size_t> offsets;   // per-layer start into params
    NetworkPurpose purpose = NetworkPurpose::classifier;
};

std::size_t layer_param_count(const LayerSpec& spec);

// Assembles the stack, validates channel/feature chaining, zero-initializes.
Network make_network(std::vector<LayerSpec> layers, NetworkPurpose purpose);

// Kaiming-scaled gaussian weights, zero biases, deterministic per seed.
void init_params(Network& net, std::uint64_t seed);

// conv(c->16)-ELU-pool-conv(16->32)-ELU-pool-flatten-dense(->classes).
// Height and width must be divisible by 4.
Network make_classifier(std::size_t height, std::size_t width, std::size_t channels,
                        std::size_t classes);

// Shape-preserving 10-conv ELU stack; channel schedule is the input channel
// count times (1,2,4,8,16,32,16,8,4,2,1). No activation after the last conv.
Network make_autoencoder(std::size_t channels);

struct ForwardTrace {
    std::vector<Tensor> activations;                      // [0]=input, [i+1]=layer i output
    std::vector<std::vector<std::uint8_t>> pool_argmax;   // per layer; empty unless maxpool
};

Tensor forward(const Network& net, const Tensor& x);
ForwardTrace forward_trace(const Network& net, const Tensor& x);

// Argmax over classifier logits.
std::size_t predict(const Network& net, const Tensor& x);

enum class LossKind { cross_entropy_with_softmax, mean_squared_error };

struct BackwardResult {
    double loss = 0.0;
    std::vector<double> param_grads;
    Tensor input_grad;
};

// Analytic gradients of the scalar loss w.r.t. every parameter and input
// entry. Cross-entropy expects a one-hot (or general distribution) target
// with the logits' shape; MSE compares elementwise means.
BackwardResult backward(const Network& net, const Tensor& x, const Tensor& target,
                        LossKind loss);

// Loss + gradient accumulation into an external buffer (param_grads summed,
// not overwritten); used by the minibatch loops. Returns the loss.
double backward_accumulate(const Network& net, const Tensor& x, const Tensor& target,
                           LossKind loss, std::vector<double>& grad_accum);

// Input cotangent pullback through a recorded forward pass: returns
// d(cotangent . output)/d(input) without touching parameter gradients.
Tensor vjp_input(const Network& net, const ForwardTrace& trace, const Tensor& cotangent);

Tensor one_hot(std::size_t label, std::size_t classes);

struct AdamState {
    std::vector<double> first_moment;
    std::vector<double> second_moment;
    std::size_t step_count = 0;
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

AdamState make_adam_state(std::size_t n_params, double lr);
void adam_step(Network& net, const std::vector<double>& grads, AdamState& state);

struct TrainOptions {
    std::size_t workers = 1;
    std::ostream* progress = nullptr;  // per-epoch lines when set
};

// Cross-entropy + Adam on the fixed two-conv classifier; deterministic for a
// fixed seed regardless of worker count.
Network train_classifier(const LabeledDataset& train_set, std::size_t epochs, double lr,
                         std::size_t batch, std::uint64_t seed,
                         const TrainOptions& opts = {});

// MSE + Adam (lr 1e-4) on the 10-conv autoencoder. Pairs are
// (corruptor(image, index) -> image); the corruptor is evaluated once per
// image up front, so its determinism decides the run's determinism.
Network train_autoencoder(const std::vector<Tensor>& clean_set,
                          const std::function<Tensor(const Tensor&, std::size_t)>& corruptor,
                          std::size_t epochs, std::uint64_t seed,
                          const TrainOptions& opts = {});

// Same, with the standard corruptor: additive gaussian noise (clamped to
// [0,1]) whose stream is keyed on the seed and the image index.
Network train_denoising_autoencoder(const std::vector<Tensor>& clean_set, double noise_sigma,
                                    std::size_t epochs, std::uint64_t seed,
                                    const TrainOptions& opts = {});

struct CheckpointMeta {
    std::uint64_t seed = 0;
    std::size_t epochs = 0;
    double final_loss = 0.0;
    nlohmann::json run;  // resolved run configuration, echoed in the manifest
};

// Binary checkpoint ("TSHD", version, purpose, layer table, raw LE f64
// params) plus a sidecar JSON manifest at path + ".json".
void save_network(const Network& net, const std::string& path, const CheckpointMeta& meta);
Network load_network(const std::string& path, CheckpointMeta* meta = nullptr);

}  // namespace ts
