#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "gridcascade/dense.hpp"
#include "gridcascade/rng.hpp"

using namespace gridcascade;
using dense::Matrix;
using dense::Trans;

namespace {

Matrix random_matrix(int r, int c, Rng& rng) {
    Matrix m(r, c);
    for (double& v : m.data) v = rng.uniform(-2.0, 2.0);
    return m;
}

}  // namespace

TEST_CASE("matmul matches a hand-computed product") {
    Matrix a(2, 3), b(3, 2), c;
    const double av[] = {1, 2, 3, 4, 5, 6};
    const double bv[] = {7, 8, 9, 10, 11, 12};
    std::copy(std::begin(av), std::end(av), a.data.begin());
    std::copy(std::begin(bv), std::end(bv), b.data.begin());
    dense::matmul_serial(a, Trans::None, b, Trans::None, c);
    CHECK(c.rows == 2);
    CHECK(c.cols == 2);
    CHECK(c[0][0] == doctest::Approx(58));
    CHECK(c[0][1] == doctest::Approx(64));
    CHECK(c[1][0] == doctest::Approx(139));
    CHECK(c[1][1] == doctest::Approx(154));
}

TEST_CASE("transpose flags agree with explicit transposes") {
    Rng rng(11);
    const Matrix a = random_matrix(5, 7, rng);
    const Matrix b = random_matrix(5, 7, rng);
    Matrix at(7, 5);
    for (int i = 0; i < 5; ++i) {
        for (int j = 0; j < 7; ++j) at[j][i] = a[i][j];
    }
    Matrix c1, c2;
    dense::matmul_serial(a, Trans::Yes, b, Trans::None, c1);  // a^T b: 7x7
    dense::matmul_serial(at, Trans::None, b, Trans::None, c2);
    REQUIRE(c1.rows == c2.rows);
    REQUIRE(c1.cols == c2.cols);
    for (size_t i = 0; i < c1.data.size(); ++i) CHECK(c1.data[i] == doctest::Approx(c2.data[i]));
}

TEST_CASE("openmp matmul is bit-identical to the serial reference") {
    Rng rng(42);
    for (int trial = 0; trial < 5; ++trial) {
        const Matrix a = random_matrix(33 + trial, 129, rng);
        const Matrix b = random_matrix(129, 65, rng);
        Matrix cs, cp;
        dense::matmul_serial(a, Trans::None, b, Trans::None, cs);
        dense::set_parallel(true);
        dense::matmul(a, Trans::None, b, Trans::None, cp);
        REQUIRE(cs.data.size() == cp.data.size());
        for (size_t i = 0; i < cs.data.size(); ++i) CHECK(cs.data[i] == cp.data[i]);
    }
}

TEST_CASE("LU solves a known system") {
    Matrix a(3, 3);
    const double av[] = {2, 1, -1, -3, -1, 2, -2, 1, 2};
    std::copy(std::begin(av), std::end(av), a.data.begin());
    std::vector<double> b = {8, -11, -3};
    REQUIRE(dense::solve_linear_serial(a, b));
    CHECK(b[0] == doctest::Approx(2.0));
    CHECK(b[1] == doctest::Approx(3.0));
    CHECK(b[2] == doctest::Approx(-1.0));
}

TEST_CASE("LU reports singular matrices") {
    Matrix a(2, 2);
    a[0][0] = 1;
    a[0][1] = 2;
    a[1][0] = 2;
    a[1][1] = 4;
    std::vector<double> b = {1, 2};
    CHECK_FALSE(dense::solve_linear_serial(a, b));
    Matrix z(3, 3);
    std::vector<double> b3 = {0, 0, 0};
    CHECK_FALSE(dense::solve_linear(z, b3));
}

TEST_CASE("openmp LU is bit-identical to the serial reference") {
    Rng rng(7);
    for (int trial = 0; trial < 3; ++trial) {
        Matrix a = random_matrix(90, 90, rng);
        for (int i = 0; i < a.rows; ++i) a[i][i] += 10.0;  // keep it well conditioned
        std::vector<double> b(90);
        for (double& v : b) v = rng.uniform(-1, 1);

        Matrix a_s = a;
        std::vector<double> b_s = b;
        REQUIRE(dense::solve_linear_serial(std::move(a_s), b_s));
        dense::set_parallel(true);
        Matrix a_p = a;
        std::vector<double> b_p = b;
        REQUIRE(dense::solve_linear(std::move(a_p), b_p));
        for (size_t i = 0; i < b_s.size(); ++i) CHECK(b_s[i] == b_p[i]);
    }
}

TEST_CASE("LU residual is small on random well-conditioned systems") {
    Rng rng(19);
    Matrix a = random_matrix(40, 40, rng);
    for (int i = 0; i < 40; ++i) a[i][i] += 8.0;
    std::vector<double> b(40);
    for (double& v : b) v = rng.uniform(-3, 3);
    const Matrix a0 = a;
    const std::vector<double> b0 = b;
    REQUIRE(dense::solve_linear(std::move(a), b));
    for (int i = 0; i < 40; ++i) {
        double acc = 0;
        for (int j = 0; j < 40; ++j) acc += a0[i][j] * b[j];
        CHECK(std::fabs(acc - b0[i]) < 1e-9);
    }
}
