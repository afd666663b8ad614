#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "tensorshield/tensor.hpp"

namespace ts {

struct DecompOptions {
    std::size_t max_iterations = 100;
    double tolerance = 1e-6;  // stop when the relative error improves less than this
    std::optional<std::uint64_t> seed;  // absent: fresh entropy per call
};

struct CPFactors {
    std::size_t rank = 0;
    std::vector<Matrix> factors;        // factors[m] is shape[m] x rank
    std::vector<double> error_history;  // relative error after each ALS sweep
    std::size_t iterations = 0;
    double final_relative_error = 0.0;
};

struct TuckerFactors {
    Tensor core;
    std::vector<Matrix> factors;        // factors[m] is shape[m] x core.shape[m]
    std::vector<double> error_history;  // relative error after each HOOI iteration
    std::size_t iterations = 0;
    double final_relative_error = 0.0;
};

// Per-mode target sizes: spatial extents map to max(1, round(fraction * d));
// with preserve_channel the last mode is kept whole when it is a channel
// axis (size <= 4). Orders < 3 have no channel axis and map every mode.
std::vector<std::size_t> choose_dims(const std::vector<std::size_t>& shape, double fraction,
                                     bool preserve_channel);

// CP rank for the same rule: the mapped value of the smallest spatial
// dimension.
std::size_t choose_cp_rank(const std::vector<std::size_t>& shape, double fraction,
                           bool preserve_channel);

// Alternating least squares from uniform(-1,1) factor init. Normal equations
// go through Khatri-Rao products; singular systems are ridged (1e-10), never
// fatal. Factor columns are norm-balanced across modes after every sweep.
CPFactors cp_decompose(const Tensor& t, std::size_t rank, const DecompOptions& opts = {});
Tensor cp_reconstruct(const CPFactors& f);

// HOOI from QR-orthonormalized gaussian init; per-mode updates take the
// leading left singular vectors of the projected unfolding, the core is the
// input contracted with the factor transposes.
TuckerFactors tucker_decompose(const Tensor& t, const std::vector<std::size_t>& core_shape,
                               const DecompOptions& opts = {});
Tensor tucker_reconstruct(const TuckerFactors& f);

}  // namespace ts
