#include "tensorshield/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "tensorshield/linalg.hpp"

namespace ts {

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m.at(i, i) = 1.0;
    return m;
}

std::size_t shape_numel(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t s : shape) n *= s;
    return n;
}

Tensor::Tensor(std::vector<std::size_t> s) : shape(std::move(s)) {
    for (std::size_t d : shape)
        if (d == 0) throw std::invalid_argument("tensor dimension must be nonzero");
    data.assign(shape_numel(shape), 0.0);
}

namespace {

std::size_t flat_index(const std::vector<std::size_t>& shape,
                       std::initializer_list<std::size_t> idx) {
    if (idx.size() != shape.size()) throw std::invalid_argument("index order mismatch");
    std::size_t flat = 0, m = 0;
    for (std::size_t i : idx) {
        if (i >= shape[m]) throw std::out_of_range("tensor index out of range");
        flat = flat * shape[m] + i;
        ++m;
    }
    return flat;
}

}  // namespace

double& Tensor::at(std::initializer_list<std::size_t> idx) {
    return data[flat_index(shape, idx)];
}

double Tensor::at(std::initializer_list<std::size_t> idx) const {
    return data[flat_index(shape, idx)];
}

Tensor Tensor::from_matrix(const Matrix& m) {
    Tensor t({m.rows, m.cols});
    t.data = m.data;
    return t;
}

namespace {

// Column weights of the mode-n unfolding: the cyclic mode order after n is
// (n+1, ..., N-1, 0, ..., n-1) and the last of those varies fastest.
std::vector<std::size_t> unfold_col_weights(const std::vector<std::size_t>& shape,
                                            std::size_t mode) {
    const std::size_t n = shape.size();
    std::vector<std::size_t> w(n, 0);
    std::size_t acc = 1;
    for (std::size_t k = 1; k < n; ++k) {
        std::size_t m = (mode + n - k) % n;
        w[m] = acc;
        acc *= shape[m];
    }
    return w;
}

}  // namespace

Matrix unfold(const Tensor& t, std::size_t mode) {
    const std::size_t n = t.order();
    if (mode >= n) throw std::invalid_argument("unfold: mode out of range");
    const std::size_t rows = t.shape[mode];
    const std::size_t cols = t.numel() / rows;
    Matrix out(rows, cols);
    const std::vector<std::size_t> w = unfold_col_weights(t.shape, mode);
    std::vector<std::size_t> idx(n, 0);
    for (std::size_t flat = 0; flat < t.numel(); ++flat) {
        std::size_t col = 0;
        for (std::size_t m = 0; m < n; ++m)
            if (m != mode) col += idx[m] * w[m];
        out.data[idx[mode] * cols + col] = t.data[flat];
        for (std::size_t m = n; m-- > 0;) {
            if (++idx[m] < t.shape[m]) break;
            idx[m] = 0;
        }
    }
    return out;
}

Tensor fold(const Matrix& m, std::size_t mode, const std::vector<std::size_t>& shape) {
    const std::size_t n = shape.size();
    if (mode >= n) throw std::invalid_argument("fold: mode out of range");
    if (m.rows != shape[mode] || m.rows * m.cols != shape_numel(shape))
        throw std::invalid_argument("fold: matrix does not match shape");
    Tensor out(shape);
    const std::vector<std::size_t> w = unfold_col_weights(shape, mode);
    std::vector<std::size_t> idx(n, 0);
    for (std::size_t flat = 0; flat < out.numel(); ++flat) {
        std::size_t col = 0;
        for (std::size_t k = 0; k < n; ++k)
            if (k != mode) col += idx[k] * w[k];
        out.data[flat] = m.data[idx[mode] * m.cols + col];
        for (std::size_t k = n; k-- > 0;) {
            if (++idx[k] < shape[k]) break;
            idx[k] = 0;
        }
    }
    return out;
}

Tensor mode_n_product(const Tensor& t, const Matrix& m, std::size_t mode) {
    if (mode >= t.order()) throw std::invalid_argument("mode_n_product: mode out of range");
    if (m.cols != t.shape[mode])
        throw std::invalid_argument("mode_n_product: matrix columns must match mode size");
    Matrix prod = matmul(m, unfold(t, mode));
    std::vector<std::size_t> shape = t.shape;
    shape[mode] = m.rows;
    return fold(prod, mode, shape);
}

Matrix khatri_rao(const Matrix& a, const Matrix& b) {
    if (a.cols != b.cols) throw std::invalid_argument("khatri_rao: column counts differ");
    Matrix out(a.rows * b.rows, a.cols);
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t j = 0; j < b.rows; ++j) {
            double* dst = out.row(i * b.rows + j);
            const double* ra = a.row(i);
            const double* rb = b.row(j);
            for (std::size_t c = 0; c < a.cols; ++c) dst[c] = ra[c] * rb[c];
        }
    return out;
}

namespace {
double sumsq(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return s;
}
}  // namespace

double frobenius_norm(const Tensor& t) { return std::sqrt(sumsq(t.data)); }
double frobenius_norm(const Matrix& m) { return std::sqrt(sumsq(m.data)); }

double dot(const Tensor& a, const Tensor& b) {
    if (a.numel() != b.numel()) throw std::invalid_argument("dot: size mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) s += a.data[i] * b.data[i];
    return s;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    if (a.numel() != b.numel()) throw std::invalid_argument("max_abs_diff: size mismatch");
    double m = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i)
        m = std::max(m, std::abs(a.data[i] - b.data[i]));
    return m;
}

double l2_diff(const Tensor& a, const Tensor& b) {
    if (a.numel() != b.numel()) throw std::invalid_argument("l2_diff: size mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) {
        double d = a.data[i] - b.data[i];
        s += d * d;
    }
    return std::sqrt(s);
}

Tensor clamp(const Tensor& t, double lo, double hi) {
    Tensor out = t;
    for (double& x : out.data) x = std::min(hi, std::max(lo, x));
    return out;
}

bool all_finite(const Tensor& t) {
    for (double x : t.data)
        if (!std::isfinite(x)) return false;
    return true;
}

}  // namespace ts
