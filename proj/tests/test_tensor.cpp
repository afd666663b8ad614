#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "tensorshield/rng.hpp"
#include "tensorshield/tensor.hpp"

using namespace ts;

namespace {

Tensor iota_tensor(std::vector<std::size_t> shape) {
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.numel(); ++i) t.data[i] = static_cast<double>(i);
    return t;
}

// Independent column-index oracle: modes run in the cyclic order
// (m+1, ..., m+N-1), the last of that list varying fastest.
std::size_t cyclic_column(const std::vector<std::size_t>& shape, std::size_t mode,
                          const std::vector<std::size_t>& idx) {
    const std::size_t n = shape.size();
    std::size_t col = 0;
    for (std::size_t k = 1; k < n; ++k) {
        std::size_t m = (mode + k) % n;
        col = col * shape[m] + idx[m];
    }
    return col;
}

}  // namespace

TEST_CASE("tensor storage is row-major with the last index fastest") {
    Tensor t = iota_tensor({2, 3, 4});
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 3; ++j)
            for (std::size_t k = 0; k < 4; ++k)
                CHECK(t.at({i, j, k}) == doctest::Approx((i * 3 + j) * 4.0 + k));
}

TEST_CASE("zero-sized dimensions are rejected") {
    CHECK_THROWS_AS(Tensor({2, 0, 3}), std::invalid_argument);
    CHECK(shape_numel({2, 3, 4}) == 24);
}

TEST_CASE("unfold mode 0 equals the row-major reshape") {
    Tensor t = iota_tensor({2, 3, 4});
    Matrix u = unfold(t, 0);
    REQUIRE(u.rows == 2);
    REQUIRE(u.cols == 12);
    for (std::size_t r = 0; r < 2; ++r)
        for (std::size_t c = 0; c < 12; ++c) CHECK(u.at(r, c) == doctest::Approx(r * 12.0 + c));
}

TEST_CASE("unfold columns follow the forward cyclic mode order") {
    std::vector<std::size_t> shape{2, 3, 4};
    Tensor t = iota_tensor(shape);
    for (std::size_t mode = 0; mode < 3; ++mode) {
        Matrix u = unfold(t, mode);
        REQUIRE(u.rows == shape[mode]);
        REQUIRE(u.cols == 24 / shape[mode]);
        std::vector<std::size_t> idx(3);
        for (idx[0] = 0; idx[0] < 2; ++idx[0])
            for (idx[1] = 0; idx[1] < 3; ++idx[1])
                for (idx[2] = 0; idx[2] < 4; ++idx[2]) {
                    double want = t.at({idx[0], idx[1], idx[2]});
                    CHECK(u.at(idx[mode], cyclic_column(shape, mode, idx)) ==
                          doctest::Approx(want));
                }
    }
}

TEST_CASE("fold inverts unfold on every mode") {
    std::vector<std::size_t> shape{3, 2, 4, 2};
    Rng rng(11);
    Tensor t(shape);
    for (double& v : t.data) v = rng.uniform(-1.0, 1.0);
    for (std::size_t mode = 0; mode < shape.size(); ++mode) {
        Tensor back = fold(unfold(t, mode), mode, shape);
        CHECK(max_abs_diff(t, back) == doctest::Approx(0.0));
    }
}

TEST_CASE("mode-n product matches the elementwise contraction") {
    Rng rng(7);
    Tensor t({3, 4, 2});
    for (double& v : t.data) v = rng.uniform(-1.0, 1.0);
    Matrix m(5, 4);
    for (double& v : m.data) v = rng.uniform(-1.0, 1.0);

    Tensor got = mode_n_product(t, m, 1);
    REQUIRE(got.shape == std::vector<std::size_t>{3, 5, 2});
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t r = 0; r < 5; ++r)
            for (std::size_t k = 0; k < 2; ++k) {
                double want = 0.0;
                for (std::size_t j = 0; j < 4; ++j) want += m.at(r, j) * t.at({i, j, k});
                CHECK(got.at({i, r, k}) == doctest::Approx(want).epsilon(1e-12));
            }
}

TEST_CASE("mode-n product with the identity is a no-op") {
    Rng rng(3);
    Tensor t({4, 3, 2});
    for (double& v : t.data) v = rng.uniform(0.0, 1.0);
    for (std::size_t mode = 0; mode < 3; ++mode) {
        Tensor same = mode_n_product(t, Matrix::identity(t.shape[mode]), mode);
        CHECK(max_abs_diff(t, same) < 1e-14);
    }
}

TEST_CASE("khatri-rao stacks kronecker columns with the left factor slower") {
    Matrix a(2, 2);
    a.data = {1, 2, 3, 4};
    Matrix b(3, 2);
    b.data = {5, 6, 7, 8, 9, 10};
    Matrix kr = khatri_rao(a, b);
    REQUIRE(kr.rows == 6);
    REQUIRE(kr.cols == 2);
    const double want0[6] = {5, 7, 9, 15, 21, 27};
    const double want1[6] = {12, 16, 20, 24, 32, 40};
    for (std::size_t r = 0; r < 6; ++r) {
        CHECK(kr.at(r, 0) == doctest::Approx(want0[r]));
        CHECK(kr.at(r, 1) == doctest::Approx(want1[r]));
    }
}

TEST_CASE("frobenius norm and metric helpers") {
    Tensor t({1, 2});
    t.data = {3.0, 4.0};
    CHECK(frobenius_norm(t) == doctest::Approx(5.0));

    Tensor a({2, 2});
    a.data = {1, 2, 3, 4};
    Tensor b({2, 2});
    b.data = {1, 2, 3, 8};
    CHECK(dot(a, b) == doctest::Approx(1 + 4 + 9 + 32));
    CHECK(max_abs_diff(a, b) == doctest::Approx(4.0));
    CHECK(l2_diff(a, b) == doctest::Approx(4.0));
}

TEST_CASE("clamp bounds every entry") {
    Tensor t({4});
    t.data = {-1.0, 0.25, 0.75, 2.0};
    Tensor c = clamp(t, 0.0, 1.0);
    CHECK(c.data == std::vector<double>{0.0, 0.25, 0.75, 1.0});
}

TEST_CASE("all_finite spots NaN and infinity") {
    Tensor t({3});
    t.data = {0.0, 1.0, 2.0};
    CHECK(all_finite(t));
    t.data[1] = std::nan("");
    CHECK_FALSE(all_finite(t));
    t.data[1] = 1.0;
    t.data[2] = 1.0 / 0.0;
    CHECK_FALSE(all_finite(t));
}

TEST_CASE("from_matrix keeps the row-major layout") {
    Matrix m(2, 3);
    m.data = {1, 2, 3, 4, 5, 6};
    Tensor t = Tensor::from_matrix(m);
    REQUIRE(t.shape == std::vector<std::size_t>{2, 3});
    CHECK(t.at({1, 2}) == doctest::Approx(6.0));
}
