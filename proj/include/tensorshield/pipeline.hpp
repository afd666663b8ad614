#pragma once

#include <string>
#include <utility>
#include <vector>

#include "tensorshield/decomp.hpp"
#include "tensorshield/nn.hpp"
#include "tensorshield/tensor.hpp"

namespace ts {

enum class DefenseMethod { none, cp, cp_ae, tucker, tucker_ae };

DefenseMethod defense_method_from_name(const std::string& name);
std::string defense_name(DefenseMethod method);
bool defense_uses_autoencoder(DefenseMethod method);
bool defense_uses_decomposition(DefenseMethod method);

struct DefenseConfig {
    DefenseMethod method = DefenseMethod::none;
    // Target dims. For tucker: the core shape (one entry per mode), or a
    // single entry replicated over the spatial modes with the channel axis
    // preserved. For cp: a single entry is the rank; a full dimension list
    // yields the smallest spatial entry as the rank.
    std::vector<std::size_t> dims;
    DecompOptions decomp_opts;
    const Network* autoencoder = nullptr;
};

// Rank/core resolution for an incoming image shape, as described above.
std::size_t resolve_cp_rank(const DefenseConfig& cfg, const std::vector<std::size_t>& shape);
std::vector<std::size_t> resolve_core_dims(const DefenseConfig& cfg,
                                           const std::vector<std::size_t>& shape);

// Decompose, reconstruct, clamp to [0,1], optionally denoise through the
// autoencoder (clamped again). method none passes the input through
// untouched. Decomposition randomness is fresh per call unless
// cfg.decomp_opts.seed is set.
Tensor purify(const Tensor& x, const DefenseConfig& cfg);

std::pair<std::size_t, Tensor> classify_defended(const Network& net, const Tensor& x,
                                                 const DefenseConfig& cfg);

// Elementwise difference min-max normalized into [0,1] for inspection; a
// zero residual maps to all zeros.
Tensor extract_noise(const Tensor& original, const Tensor& processed);

}  // namespace ts
