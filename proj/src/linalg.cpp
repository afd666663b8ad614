#include "tensorshield/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace ts {

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows) throw std::invalid_argument("matmul: inner dimensions differ");
    Matrix out(a.rows, b.cols);
    const std::size_t n = b.cols;
    // k-blocked ikj so the active slice of b stays cache-resident.
    constexpr std::size_t kb = 256;
    for (std::size_t k0 = 0; k0 < a.cols; k0 += kb) {
        const std::size_t k1 = std::min(a.cols, k0 + kb);
        for (std::size_t i = 0; i < a.rows; ++i) {
            double* orow = out.row(i);
            const double* arow = a.row(i);
            for (std::size_t k = k0; k < k1; ++k) {
                const double v = arow[k];
                const double* brow = b.row(k);
                for (std::size_t j = 0; j < n; ++j) orow[j] += v * brow[j];
            }
        }
    }
    return out;
}

Matrix matmul_at_b(const Matrix& a, const Matrix& b) {
    if (a.rows != b.rows) throw std::invalid_argument("matmul_at_b: row counts differ");
    Matrix out(a.cols, b.cols);
    for (std::size_t r = 0; r < a.rows; ++r) {
        const double* arow = a.row(r);
        const double* brow = b.row(r);
        for (std::size_t i = 0; i < a.cols; ++i) {
            const double v = arow[i];
            double* orow = out.row(i);
            for (std::size_t j = 0; j < b.cols; ++j) orow[j] += v * brow[j];
        }
    }
    return out;
}

Matrix matmul_a_bt(const Matrix& a, const Matrix& b) {
    if (a.cols != b.cols) throw std::invalid_argument("matmul_a_bt: column counts differ");
    Matrix out(a.rows, b.rows);
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double* arow = a.row(i);
        double* orow = out.row(i);
        for (std::size_t j = 0; j < b.rows; ++j) {
            const double* brow = b.row(j);
            double s = 0.0;
            for (std::size_t k = 0; k < a.cols; ++k) s += arow[k] * brow[k];
            orow[j] = s;
        }
    }
    return out;
}

Matrix transpose(const Matrix& a) {
    Matrix out(a.cols, a.rows);
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t j = 0; j < a.cols; ++j) out.at(j, i) = a.at(i, j);
    return out;
}

Matrix gram(const Matrix& a) { return matmul_at_b(a, a); }

void hadamard_inplace(Matrix& a, const Matrix& b) {
    if (a.rows != b.rows || a.cols != b.cols)
        throw std::invalid_argument("hadamard: shape mismatch");
    for (std::size_t i = 0; i < a.data.size(); ++i) a.data[i] *= b.data[i];
}

namespace {

// In-place lower Cholesky; false when a pivot is not strictly positive.
bool cholesky_inplace(Matrix& a) {
    const std::size_t n = a.rows;
    for (std::size_t j = 0; j < n; ++j) {
        double d = a.at(j, j);
        for (std::size_t k = 0; k < j; ++k) d -= a.at(j, k) * a.at(j, k);
        if (!(d > 0.0) || !std::isfinite(d)) return false;
        const double lj = std::sqrt(d);
        a.at(j, j) = lj;
        for (std::size_t i = j + 1; i < n; ++i) {
            double s = a.at(i, j);
            for (std::size_t k = 0; k < j; ++k) s -= a.at(i, k) * a.at(j, k);
            a.at(i, j) = s / lj;
        }
    }
    return true;
}

}  // namespace

Matrix solve_spd(Matrix h, const Matrix& b, double ridge) {
    if (h.rows != h.cols) throw std::invalid_argument("solve_spd: matrix not square");
    if (b.rows != h.rows) throw std::invalid_argument("solve_spd: rhs row count mismatch");
    const std::size_t n = h.rows;
    if (ridge != 0.0)
        for (std::size_t i = 0; i < n; ++i) h.at(i, i) += ridge;
    if (!cholesky_inplace(h)) throw std::runtime_error("solve_spd: matrix not positive definite");
    Matrix x = b;
    // L z = b, then L^T x = z, column by column over the rhs.
    for (std::size_t c = 0; c < b.cols; ++c) {
        for (std::size_t i = 0; i < n; ++i) {
            double s = x.at(i, c);
            for (std::size_t k = 0; k < i; ++k) s -= h.at(i, k) * x.at(k, c);
            x.at(i, c) = s / h.at(i, i);
        }
        for (std::size_t i = n; i-- > 0;) {
            double s = x.at(i, c);
            for (std::size_t k = i + 1; k < n; ++k) s -= h.at(k, i) * x.at(k, c);
            x.at(i, c) = s / h.at(i, i);
        }
    }
    return x;
}

void orthonormalize_columns(Matrix& a) {
    const std::size_t n = a.rows, k = a.cols;
    std::size_t next_basis = 0;
    for (std::size_t j = 0; j < k; ++j) {
        for (int pass = 0; pass < 2; ++pass) {
            for (std::size_t p = 0; p < j; ++p) {
                double d = 0.0;
                for (std::size_t i = 0; i < n; ++i) d += a.at(i, p) * a.at(i, j);
                for (std::size_t i = 0; i < n; ++i) a.at(i, j) -= d * a.at(i, p);
            }
        }
        double nrm = 0.0;
        for (std::size_t i = 0; i < n; ++i) nrm += a.at(i, j) * a.at(i, j);
        nrm = std::sqrt(nrm);
        if (nrm > 1e-8) {
            for (std::size_t i = 0; i < n; ++i) a.at(i, j) /= nrm;
            continue;
        }
        // Degenerate column: substitute the first canonical direction with a
        // nonvanishing residual against the columns already fixed.
        bool placed = false;
        while (next_basis < n && !placed) {
            for (std::size_t i = 0; i < n; ++i) a.at(i, j) = (i == next_basis) ? 1.0 : 0.0;
            ++next_basis;
            for (int pass = 0; pass < 2; ++pass) {
                for (std::size_t p = 0; p < j; ++p) {
                    double d = 0.0;
                    for (std::size_t i = 0; i < n; ++i) d += a.at(i, p) * a.at(i, j);
                    for (std::size_t i = 0; i < n; ++i) a.at(i, j) -= d * a.at(i, p);
                }
            }
            double rn = 0.0;
            for (std::size_t i = 0; i < n; ++i) rn += a.at(i, j) * a.at(i, j);
            rn = std::sqrt(rn);
            if (rn > 1e-6) {
                for (std::size_t i = 0; i < n; ++i) a.at(i, j) /= rn;
                placed = true;
            }
        }
        if (!placed) throw std::runtime_error("orthonormalize_columns: rank completion failed");
    }
}

EighResult jacobi_eigh(Matrix a, int max_sweeps) {
    if (a.rows != a.cols) throw std::invalid_argument("jacobi_eigh: matrix not square");
    const std::size_t n = a.rows;
    EighResult res;
    if (n == 0) return res;
    // Enforce exact symmetry so rotations stay consistent.
    for (std::size_t p = 0; p < n; ++p)
        for (std::size_t q = p + 1; q < n; ++q) {
            double v = 0.5 * (a.at(p, q) + a.at(q, p));
            a.at(p, q) = v;
            a.at(q, p) = v;
        }

    // Rows of vt accumulate the transposed eigenvector matrix so every
    // rotation touches contiguous memory.
    Matrix vt = Matrix::identity(n);
    double* ad = a.data.data();

    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        double off = 0.0, total = 0.0;
        for (std::size_t p = 0; p < n; ++p) {
            total += ad[p * n + p] * ad[p * n + p];
            for (std::size_t q = p + 1; q < n; ++q) off += 2.0 * ad[p * n + q] * ad[p * n + q];
        }
        total += off;
        if (off <= total * 1e-28 || off == 0.0) break;
        // Skip rotations that cannot move the off-diagonal mass meaningfully.
        const double small = std::sqrt(off / static_cast<double>(n * n)) * 1e-2;

        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = ad[p * n + q];
                if (std::abs(apq) <= small) continue;
                const double app = ad[p * n + p];
                const double aqq = ad[q * n + q];
                const double theta = (aqq - app) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(1.0 + theta * theta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = t * c;

                double* rp = ad + p * n;
                double* rq = ad + q * n;
                for (std::size_t i = 0; i < n; ++i) {
                    const double x = rp[i], y = rq[i];
                    rp[i] = c * x - s * y;
                    rq[i] = s * x + c * y;
                }
                // The 2x2 pivot block has a closed form; overwrite it.
                rp[p] = app - t * apq;
                rq[q] = aqq + t * apq;
                rp[q] = 0.0;
                rq[p] = 0.0;
                // Mirror the updated rows into columns p and q.
                for (std::size_t i = 0; i < n; ++i) {
                    if (i == p || i == q) continue;
                    ad[i * n + p] = rp[i];
                    ad[i * n + q] = rq[i];
                }
                double* vp = vt.row(p);
                double* vq = vt.row(q);
                for (std::size_t i = 0; i < n; ++i) {
                    const double x = vp[i], y = vq[i];
                    vp[i] = c * x - s * y;
                    vq[i] = s * x + c * y;
                }
            }
        }
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t i, std::size_t j) { return ad[i * n + i] > ad[j * n + j]; });
    res.eigenvalues.resize(n);
    res.vectors = Matrix(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        res.eigenvalues[j] = ad[order[j] * n + order[j]];
        const double* src = vt.row(order[j]);
        for (std::size_t i = 0; i < n; ++i) res.vectors.at(i, j) = src[i];
    }
    return res;
}

Matrix leading_left_singular_vectors(const Matrix& m, std::size_t k) {
    const std::size_t r = m.rows, c = m.cols;
    if (k < 1 || k > r)
        throw std::invalid_argument("leading_left_singular_vectors: k out of range");
    if (r <= c) {
        EighResult e = jacobi_eigh(matmul_a_bt(m, m));
        Matrix u(r, k);
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < k; ++j) u.at(i, j) = e.vectors.at(i, j);
        return u;
    }
    // The Gram side yields at most c directions; anything past the rank (or
    // past c when k > c) is filled in by the orthonormal completion.
    EighResult e = jacobi_eigh(gram(m));
    Matrix u(r, k);
    const double smax = std::sqrt(std::max(e.eigenvalues[0], 0.0));
    for (std::size_t j = 0; j < std::min(k, c); ++j) {
        const double sj = std::sqrt(std::max(e.eigenvalues[j], 0.0));
        if (sj <= smax * 1e-10 || sj == 0.0) continue;
        for (std::size_t i = 0; i < r; ++i) {
            const double* mrow = m.row(i);
            double s = 0.0;
            for (std::size_t t = 0; t < c; ++t) s += mrow[t] * e.vectors.at(t, j);
            u.at(i, j) = s / sj;
        }
    }
    orthonormalize_columns(u);
    return u;
}

}  // namespace ts
