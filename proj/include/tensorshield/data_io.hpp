#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tensorshield/tensor.hpp"

namespace ts {

struct LabeledDataset {
    std::vector<Tensor> images;        // H x W x C, entries in [0,1]
    std::vector<std::size_t> labels;   // < class_count
    std::size_t class_count = 0;
    // Stable per-image identity. Randomized processing keys off these, so
    // reordering a dataset never changes per-image results.
    std::vector<std::uint64_t> ids;

    std::size_t size() const { return images.size(); }
};

// Reorders images/labels/ids together.
void shuffle_dataset(LabeledDataset& ds, std::uint64_t seed);

// Big-endian IDX pair (images magic 0x00000803, labels 0x00000801); bytes
// scale to [0,1] as b/255. Fails closed: any format problem throws before a
// dataset is returned.
LabeledDataset load_idx(const std::string& image_path, const std::string& label_path);

struct SynthOptions {
    std::size_t height = 28;
    std::size_t width = 28;
    std::size_t channels = 1;
    double background = 0.12;          // base luminance
    double amplitude_lo = 0.55;        // class-shape intensity range
    double amplitude_hi = 0.75;
    int max_shift = 3;                 // per-image translation jitter, pixels
    double scale_lo = 0.85;            // per-image size jitter
    double scale_hi = 1.0;
    double noise_sigma = 0.02;         // per-pixel gaussian noise
    // Class-keyed +/- texture stamped on most images. The patterns are fixed
    // global functions of the class index, independent of the dataset seed.
    double texture_amplitude = 2.0 / 255.0;
    double texture_probability = 0.75;
    // With this probability a textured image borrows another class's shape
    // while the texture keeps following the label. Training on such images
    // teaches a classifier to trust the texture over the shape, which makes
    // it brittle against small-budget gradient attacks by construction.
    double shape_swap_probability = 0.0;
    // With this probability a textured image carries a wrong class's texture
    // instead (label unchanged). A small rate keeps the trained softmax off
    // its saturation plateau, so input gradients stay informative.
    double texture_lie_probability = 0.0;
    // With this probability a textured image carries a random non-class
    // pattern instead (shape and label unchanged, swaps and lies skipped).
    // Teaches the classifier to fall back to the shape when the texture is
    // incoherent, which is what purified inputs look like.
    double texture_scramble_probability = 0.0;
};

// Deterministic class-conditioned shapes (rings, bars, crosses, blobs) with
// jitter and a class texture; labels round-robin over i % classes.
LabeledDataset synth_dataset(std::uint64_t seed, std::size_t n, std::size_t classes);
LabeledDataset synth_dataset(std::uint64_t seed, std::size_t n, std::size_t classes,
                             const SynthOptions& opts);

// One raw little-endian f64 file per tensor plus index.json carrying shape,
// checksums, and per-item attack metadata.
struct BatchItem {
    Tensor tensor;
    std::uint64_t id = 0;
    std::size_t label = 0;
    std::string attack;     // empty when not attack output
    bool success = false;
    double linf = 0.0;
    double l2 = 0.0;
};

struct TensorBatch {
    std::vector<BatchItem> items;
    nlohmann::json config;  // run configuration echo
};

void save_tensor_batch(const TensorBatch& batch, const std::string& dir);
TensorBatch load_tensor_batch(const std::string& dir);

// Grayscale/color netpbm export (binary P5/P2-style P5/P6), values clamped
// to [0,1] then scaled to 255.
void write_pgm(const Tensor& t, const std::string& path);
void write_ppm(const Tensor& t, const std::string& path);

std::uint64_t fnv1a64(const void* data, std::size_t bytes);

}  // namespace ts
