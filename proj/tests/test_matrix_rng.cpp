#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <limits>

#include "coadapt/matrix.hpp"
#include "coadapt/rng.hpp"

using namespace coadapt;

TEST_CASE("matrix construction validates") {
    Matrix m(2, 3, 1.5);
    CHECK(m.rows() == 2);
    CHECK(m.cols() == 3);
    CHECK(m(1, 2) == 1.5);

    CHECK_THROWS_AS(Matrix::from_data(2, 2, {1.0, 2.0, 3.0}), ShapeError);
    CHECK_THROWS_AS(
        Matrix::from_data(1, 2, {1.0, std::numeric_limits<double>::quiet_NaN()}),
        DomainError);
    CHECK_THROWS_AS(
        Matrix::from_data(1, 1, {std::numeric_limits<double>::infinity()}),
        DomainError);
    CHECK_THROWS_AS(Matrix::from_rows({{1.0, 2.0}, {3.0}}), ShapeError);
}

TEST_CASE("matmul matches a hand-computed product") {
    Matrix a = Matrix::from_rows({{1.0, 2.0}, {3.0, 4.0}});
    Matrix b = Matrix::from_rows({{5.0, 6.0}, {7.0, 8.0}});
    Matrix c = matmul(a, b);
    CHECK(c(0, 0) == doctest::Approx(19.0));
    CHECK(c(0, 1) == doctest::Approx(22.0));
    CHECK(c(1, 0) == doctest::Approx(43.0));
    CHECK(c(1, 1) == doctest::Approx(50.0));
    CHECK_THROWS_AS(matmul(a, Matrix(3, 2)), ShapeError);
}

TEST_CASE("matmul with identity and transpose involution") {
    Rng rng(11);
    Matrix a(4, 6);
    for (std::size_t i = 0; i < a.size(); ++i) a.data()[i] = rng.uniform(-1.0, 1.0);
    Matrix left = matmul(Matrix::identity(4), a);
    Matrix right = matmul(a, Matrix::identity(6));
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(left.data()[i] == a.data()[i]);
        CHECK(right.data()[i] == a.data()[i]);
    }
    Matrix tt = transpose(transpose(a));
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(tt.data()[i] == a.data()[i]);
}

TEST_CASE("matvec agrees with matmul against a column") {
    Rng rng(3);
    Matrix a(5, 3);
    for (std::size_t i = 0; i < a.size(); ++i) a.data()[i] = rng.normal();
    std::vector<double> x = {0.5, -1.25, 2.0};
    Matrix col(3, 1);
    for (std::size_t i = 0; i < 3; ++i) col(i, 0) = x[i];
    Matrix prod = matmul(a, col);
    std::vector<double> y = matvec(a, x);
    for (std::size_t i = 0; i < 5; ++i) CHECK(y[i] == doctest::Approx(prod(i, 0)));

    std::vector<double> z = {1.0, 2.0, 3.0, 4.0, 5.0};
    std::vector<double> yt = matvec_transposed(a, z);
    Matrix zt(1, 5);
    for (std::size_t i = 0; i < 5; ++i) zt(0, i) = z[i];
    Matrix prod_t = matmul(zt, a);
    for (std::size_t j = 0; j < 3; ++j) CHECK(yt[j] == doctest::Approx(prod_t(0, j)));
}

TEST_CASE("trace and norms") {
    Matrix a = Matrix::from_rows({{1.0, -2.0}, {3.0, 4.0}});
    CHECK(trace(a) == doctest::Approx(5.0));
    CHECK(frobenius_norm(a) == doctest::Approx(std::sqrt(30.0)));
    CHECK(max_abs(a) == doctest::Approx(4.0));
    CHECK_THROWS_AS(trace(Matrix(2, 3)), ShapeError);
}

TEST_CASE("rng streams are deterministic and seed-sensitive") {
    Rng a(42), b(42), c(43);
    bool any_diff = false;
    for (int i = 0; i < 64; ++i) {
        const std::uint64_t va = a.next_u64();
        CHECK(va == b.next_u64());
        if (va != c.next_u64()) any_diff = true;
    }
    CHECK(any_diff);
}

TEST_CASE("rng uniform and uniform_int ranges") {
    Rng rng(7);
    for (int i = 0; i < 1000; ++i) {
        const double u = rng.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        const std::uint64_t k = rng.uniform_int(7);
        CHECK(k < 7);
    }
    CHECK(rng.uniform_int(1) == 0);
    CHECK_THROWS_AS(rng.uniform_int(0), DomainError);
}

TEST_CASE("rng normal moments are sane") {
    Rng rng(1234);
    const int n = 40000;
    double sum = 0.0, sum_sq = 0.0;
    for (int i = 0; i < n; ++i) {
        const double z = rng.normal();
        sum += z;
        sum_sq += z * z;
    }
    const double mean = sum / n;
    const double var = sum_sq / n - mean * mean;
    CHECK(std::fabs(mean) < 0.02);
    CHECK(std::fabs(var - 1.0) < 0.05);
}

TEST_CASE("rng fork gives an independent stream without advancing the parent") {
    Rng parent(99);
    Rng f1 = parent.fork(1);
    Rng f2 = parent.fork(2);
    Rng f1_again = parent.fork(1);
    CHECK(f1.next_u64() == f1_again.next_u64());
    CHECK(f1.next_u64() != f2.next_u64());

    Rng fresh(99);
    for (int i = 0; i < 8; ++i) CHECK(parent.next_u64() == fresh.next_u64());
}
