#include "tensorshield/decomp.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "tensorshield/linalg.hpp"
#include "tensorshield/rng.hpp"

namespace ts {

namespace {

bool has_channel_axis(const std::vector<std::size_t>& shape) {
    return shape.size() >= 3 && shape.back() <= 4;
}

std::size_t mapped_dim(std::size_t d, double fraction) {
    auto m = static_cast<std::size_t>(
        std::max<long long>(1, std::llround(fraction * static_cast<double>(d))));
    return std::min(m, d);
}

// Khatri-Rao chain over every mode except `skip`, in the cyclic order
// (skip+1, ..., skip-1). Matches the column order of unfold(t, skip), so
// X_(skip) ~ factors[skip] * chain^T.
Matrix kr_chain(const std::vector<Matrix>& factors, std::size_t skip) {
    const std::size_t n = factors.size();
    Matrix z;
    bool first = true;
    for (std::size_t k = 1; k < n; ++k) {
        const Matrix& f = factors[(skip + k) % n];
        z = first ? f : khatri_rao(z, f);
        first = false;
    }
    return z;
}

Matrix uniform_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
    Matrix m(rows, cols);
    for (double& v : m.data) v = rng.uniform(-1.0, 1.0);
    return m;
}

Matrix gaussian_orthonormal(std::size_t rows, std::size_t cols, Rng& rng) {
    Matrix m(rows, cols);
    for (double& v : m.data) v = rng.gaussian();
    orthonormalize_columns(m);
    return m;
}

// Least-squares factor update A H = M. Singular H gets a ridge instead of
// failing; as a last resort the previous factor is kept (a skipped update
// cannot increase the error).
Matrix solve_factor(const Matrix& h, const Matrix& m, const Matrix& previous) {
    const Matrix mt = transpose(m);
    double ridge = 0.0;
    for (int attempt = 0; attempt < 4; ++attempt) {
        try {
            return transpose(solve_spd(h, mt, ridge));
        } catch (const std::runtime_error&) {
            ridge = (ridge == 0.0) ? 1e-10 : ridge * 1e3;
        }
    }
    return previous;
}

}  // namespace

std::vector<std::size_t> choose_dims(const std::vector<std::size_t>& shape, double fraction,
                                     bool preserve_channel) {
    if (shape.empty()) throw std::invalid_argument("choose_dims: empty shape");
    if (!(fraction > 0.0) || fraction > 1.0)
        throw std::invalid_argument("choose_dims: fraction must be in (0, 1]");
    std::vector<std::size_t> dims(shape.size());
    for (std::size_t m = 0; m < shape.size(); ++m) dims[m] = mapped_dim(shape[m], fraction);
    if (preserve_channel && has_channel_axis(shape)) dims.back() = shape.back();
    return dims;
}

std::size_t choose_cp_rank(const std::vector<std::size_t>& shape, double fraction,
                           bool preserve_channel) {
    std::vector<std::size_t> dims = choose_dims(shape, fraction, preserve_channel);
    std::size_t spatial = dims.size();
    if (has_channel_axis(shape)) --spatial;  // channel never defines the rank
    std::size_t rank = dims[0];
    for (std::size_t m = 1; m < spatial; ++m) rank = std::min(rank, dims[m]);
    return rank;
}

CPFactors cp_decompose(const Tensor& t, std::size_t rank, const DecompOptions& opts) {
    if (rank < 1) throw std::invalid_argument("cp_decompose: rank must be >= 1");
    if (t.order() < 2) throw std::invalid_argument("cp_decompose: tensor order must be >= 2");
    if (opts.max_iterations < 1 || !(opts.tolerance >= 0.0))
        throw std::invalid_argument("cp_decompose: invalid options");
    const std::size_t n = t.order();

    CPFactors out;
    out.rank = rank;
    Rng rng(opts.seed ? *opts.seed : fresh_entropy_seed());
    out.factors.reserve(n);
    for (std::size_t m = 0; m < n; ++m)
        out.factors.push_back(uniform_matrix(t.shape[m], rank, rng));

    const double norm_x = frobenius_norm(t);
    if (norm_x == 0.0) {
        for (Matrix& f : out.factors) std::fill(f.data.begin(), f.data.end(), 0.0);
        out.error_history = {0.0};
        out.final_relative_error = 0.0;
        return out;
    }

    // The unfoldings are fixed across sweeps; build them once.
    std::vector<Matrix> unfoldings;
    unfoldings.reserve(n);
    for (std::size_t m = 0; m < n; ++m) unfoldings.push_back(unfold(t, m));

    std::vector<Matrix> grams(n);
    for (std::size_t m = 0; m < n; ++m) grams[m] = gram(out.factors[m]);

    const double norm_x2 = norm_x * norm_x;
    double prev_rel = -1.0;

    for (std::size_t sweep = 0; sweep < opts.max_iterations; ++sweep) {
        Matrix last_h, last_m;
        for (std::size_t mode = 0; mode < n; ++mode) {
            Matrix h(rank, rank);
            std::fill(h.data.begin(), h.data.end(), 1.0);
            for (std::size_t m = 0; m < n; ++m)
                if (m != mode) hadamard_inplace(h, grams[m]);
            Matrix z = kr_chain(out.factors, mode);
            Matrix mttkrp = matmul(unfoldings[mode], z);
            out.factors[mode] = solve_factor(h, mttkrp, out.factors[mode]);
            grams[mode] = gram(out.factors[mode]);
            if (mode == n - 1) {
                last_h = std::move(h);
                last_m = std::move(mttkrp);
            }
        }
        // ||X - X_hat||^2 = ||X||^2 - 2 <A_n, M> + 1' (H o A_n'A_n) 1 with the
        // last updated mode's Khatri-Rao pieces.
        const Matrix& a = out.factors[n - 1];
        double inner = 0.0;
        for (std::size_t i = 0; i < a.data.size(); ++i) inner += a.data[i] * last_m.data[i];
        double model2 = 0.0;
        for (std::size_t i = 0; i < last_h.data.size(); ++i)
            model2 += last_h.data[i] * grams[n - 1].data[i];
        const double err2 = std::max(0.0, norm_x2 - 2.0 * inner + model2);
        const double rel = std::sqrt(err2) / norm_x;
        out.error_history.push_back(rel);
        out.iterations = sweep + 1;

        // Norm-balance: unit columns everywhere, weights spread evenly.
        std::vector<double> lambda(rank, 1.0);
        for (std::size_t m = 0; m < n; ++m) {
            Matrix& f = out.factors[m];
            for (std::size_t c = 0; c < rank; ++c) {
                double s = 0.0;
                for (std::size_t i = 0; i < f.rows; ++i) s += f.at(i, c) * f.at(i, c);
                s = std::sqrt(s);
                lambda[c] *= s;
                if (s > 0.0)
                    for (std::size_t i = 0; i < f.rows; ++i) f.at(i, c) /= s;
            }
        }
        for (std::size_t c = 0; c < rank; ++c) {
            const double w = lambda[c] > 0.0
                                 ? std::pow(lambda[c], 1.0 / static_cast<double>(n))
                                 : 0.0;
            for (std::size_t m = 0; m < n; ++m) {
                Matrix& f = out.factors[m];
                for (std::size_t i = 0; i < f.rows; ++i) f.at(i, c) *= w;
            }
        }
        for (std::size_t m = 0; m < n; ++m) grams[m] = gram(out.factors[m]);

        if (prev_rel >= 0.0 && std::abs(prev_rel - rel) < opts.tolerance) break;
        prev_rel = rel;
    }
    out.final_relative_error = out.error_history.back();
    return out;
}

Tensor cp_reconstruct(const CPFactors& f) {
    if (f.factors.empty()) throw std::invalid_argument("cp_reconstruct: empty factors");
    for (const Matrix& m : f.factors)
        if (m.cols != f.rank) throw std::invalid_argument("cp_reconstruct: rank mismatch");
    Matrix z = kr_chain(f.factors, 0);
    Matrix x0 = matmul_a_bt(f.factors[0], z);
    std::vector<std::size_t> shape(f.factors.size());
    for (std::size_t m = 0; m < f.factors.size(); ++m) shape[m] = f.factors[m].rows;
    return fold(x0, 0, shape);
}

TuckerFactors tucker_decompose(const Tensor& t, const std::vector<std::size_t>& core_shape,
                               const DecompOptions& opts) {
    const std::size_t n = t.order();
    if (core_shape.size() != n)
        throw std::invalid_argument("tucker_decompose: core shape order mismatch");
    for (std::size_t m = 0; m < n; ++m)
        if (core_shape[m] < 1 || core_shape[m] > t.shape[m])
            throw std::invalid_argument("tucker_decompose: core dim exceeds tensor dim");
    if (opts.max_iterations < 1 || !(opts.tolerance >= 0.0))
        throw std::invalid_argument("tucker_decompose: invalid options");

    TuckerFactors out;
    Rng rng(opts.seed ? *opts.seed : fresh_entropy_seed());
    out.factors.reserve(n);
    for (std::size_t m = 0; m < n; ++m)
        out.factors.push_back(gaussian_orthonormal(t.shape[m], core_shape[m], rng));

    const double norm_x = frobenius_norm(t);
    if (norm_x == 0.0) {
        out.core = Tensor(core_shape);
        out.error_history = {0.0};
        out.final_relative_error = 0.0;
        return out;
    }
    const double norm_x2 = norm_x * norm_x;

    auto project_except = [&](std::size_t skip) {
        Tensor y = t;
        for (std::size_t m = 0; m < n; ++m) {
            if (m == skip) continue;
            y = mode_n_product(y, transpose(out.factors[m]), m);
        }
        return y;
    };

    double prev_rel = -1.0;
    for (std::size_t it = 0; it < opts.max_iterations; ++it) {
        Tensor last_projected;
        for (std::size_t mode = 0; mode < n; ++mode) {
            Tensor y = project_except(mode);
            out.factors[mode] =
                leading_left_singular_vectors(unfold(y, mode), core_shape[mode]);
            if (mode == n - 1) last_projected = std::move(y);
        }
        out.core = mode_n_product(last_projected, transpose(out.factors[n - 1]), n - 1);
        // Orthonormal factors make ||X - X_hat||^2 = ||X||^2 - ||core||^2.
        const double core_n = frobenius_norm(out.core);
        const double err2 = std::max(0.0, norm_x2 - core_n * core_n);
        const double rel = std::sqrt(err2) / norm_x;
        out.error_history.push_back(rel);
        out.iterations = it + 1;
        if (prev_rel >= 0.0 && std::abs(prev_rel - rel) < opts.tolerance) break;
        prev_rel = rel;
    }
    out.final_relative_error = out.error_history.back();
    return out;
}

Tensor tucker_reconstruct(const TuckerFactors& f) {
    if (f.factors.size() != f.core.order())
        throw std::invalid_argument("tucker_reconstruct: factor count mismatch");
    Tensor x = f.core;
    for (std::size_t m = 0; m < f.factors.size(); ++m)
        x = mode_n_product(x, f.factors[m], m);
    return x;
}

}  // namespace ts
