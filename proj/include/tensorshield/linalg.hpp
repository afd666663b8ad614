#pragma once

#include <cstddef>
#include <vector>

#include "tensorshield/tensor.hpp"

namespace ts {

Matrix matmul(const Matrix& a, const Matrix& b);       // a (m x k) * b (k x n)
Matrix matmul_at_b(const Matrix& a, const Matrix& b);  // a^T * b
Matrix matmul_a_bt(const Matrix& a, const Matrix& b);  // a * b^T
Matrix transpose(const Matrix& a);
Matrix gram(const Matrix& a);  // a^T a

// Solves (H + ridge*I) X = B for symmetric positive definite H via Cholesky.
// B and the result are (n x m). Throws if the factorization fails.
Matrix solve_spd(Matrix h, const Matrix& b, double ridge = 0.0);

// Hadamard (elementwise) product, in place on the first argument.
void hadamard_inplace(Matrix& a, const Matrix& b);

// Modified Gram-Schmidt on the columns, two passes. Columns that vanish are
// replaced by canonical basis directions so the result always has full
// column rank.
void orthonormalize_columns(Matrix& a);

struct EighResult {
    std::vector<double> eigenvalues;  // descending
    Matrix vectors;                   // column j pairs with eigenvalues[j]
};

// Cyclic Jacobi for symmetric matrices. Stops when the off-diagonal mass is
// negligible relative to the diagonal or after max_sweeps.
EighResult jacobi_eigh(Matrix a, int max_sweeps = 60);

// First k left singular vectors of m, via the Gram matrix of the smaller
// side and a Jacobi eigendecomposition. Columns are orthonormal even when
// the trailing singular values vanish. Requires 1 <= k <= min(rows, cols).
Matrix leading_left_singular_vectors(const Matrix& m, std::size_t k);

}  // namespace ts
