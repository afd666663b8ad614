#pragma once

#include <cstddef>
#include <initializer_list>
#include <vector>

namespace ts {

// Dense row-major matrix of doubles.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
    double* row(std::size_t r) { return data.data() + r * cols; }
    const double* row(std::size_t r) const { return data.data() + r * cols; }

    static Matrix identity(std::size_t n);
};

// Dense row-major tensor: the last index varies fastest in memory.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> s);

    std::size_t order() const { return shape.size(); }
    std::size_t numel() const { return data.size(); }

    double& at(std::initializer_list<std::size_t> idx);
    double at(std::initializer_list<std::size_t> idx) const;

    static Tensor zeros(std::vector<std::size_t> s) { return Tensor(std::move(s)); }
    static Tensor from_matrix(const Matrix& m);
};

std::size_t shape_numel(const std::vector<std::size_t>& shape);

// Mode-n unfolding. Row r holds every element with index n equal to r; the
// columns run over the remaining modes in the cyclic order
// (n+1, ..., N-1, 0, ..., n-1) with the last mode in that list fastest.
// fold is the exact inverse for the same mode and shape.
Matrix unfold(const Tensor& t, std::size_t mode);
Tensor fold(const Matrix& m, std::size_t mode, const std::vector<std::size_t>& shape);

// Contracts mode `mode` of t with the columns of m: result mode size m.rows,
// requires m.cols == t.shape[mode].
Tensor mode_n_product(const Tensor& t, const Matrix& m, std::size_t mode);

// Column-wise Khatri-Rao product: (IJ) x K from (I x K) and (J x K); each
// column is the Kronecker product of the two columns, left factor slower.
Matrix khatri_rao(const Matrix& a, const Matrix& b);

double frobenius_norm(const Tensor& t);
double frobenius_norm(const Matrix& m);

double dot(const Tensor& a, const Tensor& b);
double max_abs_diff(const Tensor& a, const Tensor& b);
double l2_diff(const Tensor& a, const Tensor& b);

// Elementwise clamp to [lo, hi].
Tensor clamp(const Tensor& t, double lo, double hi);

bool all_finite(const Tensor& t);

}  // namespace ts
