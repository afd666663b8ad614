#include "tensorshield/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ts {

DefenseMethod defense_method_from_name(const std::string& name) {
    if (name == "none") return DefenseMethod::none;
    if (name == "cp") return DefenseMethod::cp;
    if (name == "cp_ae" || name == "cp-ae") return DefenseMethod::cp_ae;
    if (name == "tucker") return DefenseMethod::tucker;
    if (name == "tucker_ae" || name == "tucker-ae") return DefenseMethod::tucker_ae;
    throw std::invalid_argument("unknown defense: " + name);
}

std::string defense_name(DefenseMethod method) {
    switch (method) {
        case DefenseMethod::none: return "none";
        case DefenseMethod::cp: return "cp";
        case DefenseMethod::cp_ae: return "cp_ae";
        case DefenseMethod::tucker: return "tucker";
        case DefenseMethod::tucker_ae: return "tucker_ae";
    }
    return "?";
}

bool defense_uses_autoencoder(DefenseMethod method) {
    return method == DefenseMethod::cp_ae || method == DefenseMethod::tucker_ae;
}

bool defense_uses_decomposition(DefenseMethod method) {
    return method != DefenseMethod::none;
}

std::size_t resolve_cp_rank(const DefenseConfig& cfg, const std::vector<std::size_t>& shape) {
    if (cfg.dims.empty()) throw std::invalid_argument("defense: dims not set");
    if (cfg.dims.size() == 1) return cfg.dims[0];
    if (cfg.dims.size() != shape.size())
        throw std::invalid_argument("defense: dims order does not match image");
    std::size_t spatial = shape.size();
    if (shape.size() >= 3 && shape.back() <= 4) --spatial;
    std::size_t rank = cfg.dims[0];
    for (std::size_t m = 1; m < spatial; ++m) rank = std::min(rank, cfg.dims[m]);
    return rank;
}

std::vector<std::size_t> resolve_core_dims(const DefenseConfig& cfg,
                                           const std::vector<std::size_t>& shape) {
    if (cfg.dims.empty()) throw std::invalid_argument("defense: dims not set");
    std::vector<std::size_t> core;
    if (cfg.dims.size() == shape.size()) {
        core = cfg.dims;
    } else if (cfg.dims.size() == 1) {
        core.assign(shape.size(), cfg.dims[0]);
        if (shape.size() >= 3 && shape.back() <= 4) core.back() = shape.back();
    } else {
        throw std::invalid_argument("defense: dims order does not match image");
    }
    for (std::size_t m = 0; m < shape.size(); ++m)
        if (core[m] < 1 || core[m] > shape[m])
            throw std::invalid_argument("defense: core dim exceeds image dim");
    return core;
}

Tensor purify(const Tensor& x, const DefenseConfig& cfg) {
    if (defense_uses_autoencoder(cfg.method) && cfg.autoencoder == nullptr)
        throw std::invalid_argument("defense: method requires an autoencoder");
    if (cfg.method == DefenseMethod::none) return x;

    Tensor recon;
    if (cfg.method == DefenseMethod::cp || cfg.method == DefenseMethod::cp_ae) {
        const std::size_t rank = resolve_cp_rank(cfg, x.shape);
        recon = cp_reconstruct(cp_decompose(x, rank, cfg.decomp_opts));
    } else {
        const std::vector<std::size_t> core = resolve_core_dims(cfg, x.shape);
        recon = tucker_reconstruct(tucker_decompose(x, core, cfg.decomp_opts));
    }
    Tensor out = clamp(recon, 0.0, 1.0);
    if (defense_uses_autoencoder(cfg.method))
        out = clamp(forward(*cfg.autoencoder, out), 0.0, 1.0);
    return out;
}

std::pair<std::size_t, Tensor> classify_defended(const Network& net, const Tensor& x,
                                                 const DefenseConfig& cfg) {
    Tensor purified = purify(x, cfg);
    return {predict(net, purified), std::move(purified)};
}

Tensor extract_noise(const Tensor& original, const Tensor& processed) {
    if (original.shape != processed.shape)
        throw std::invalid_argument("extract_noise: shape mismatch");
    Tensor diff(original.shape);
    double lo = 1e300, hi = -1e300;
    for (std::size_t i = 0; i < diff.numel(); ++i) {
        diff.data[i] = original.data[i] - processed.data[i];
        lo = std::min(lo, diff.data[i]);
        hi = std::max(hi, diff.data[i]);
    }
    const double span = hi - lo;
    if (span <= 0.0) {
        std::fill(diff.data.begin(), diff.data.end(), 0.0);
        return diff;
    }
    for (double& v : diff.data) v = (v - lo) / span;
    return diff;
}

}  // namespace ts
