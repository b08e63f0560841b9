// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <limits>

#include "vtrim/numeric.hpp"

using namespace vtrim;

TEST_CASE("matmul matches a hand-worked example") {
    Matrix a(2, 3);
    a.data = {1, 2, 3, 4, 5, 6};
    Matrix b(3, 2);
    b.data = {7, 8, 9, 10, 11, 12};
    const Matrix c = matmul(a, b);
    REQUIRE(c.rows == 2);
    REQUIRE(c.cols == 2);
    CHECK(c.at(0, 0) == 58.0);
    CHECK(c.at(0, 1) == 64.0);
    CHECK(c.at(1, 0) == 139.0);
    CHECK(c.at(1, 1) == 154.0);
}

TEST_CASE("matmul against an integer brute-force oracle") {
    std::uint64_t state = 7;
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t r = 1 + splitmix64(state) % 6;
        const std::size_t k = 1 + splitmix64(state) % 6;
        const std::size_t c = 1 + splitmix64(state) % 6;
        Matrix a(r, k), b(k, c);
        for (double& v : a.data) v = static_cast<double>(splitmix64(state) % 7) - 3.0;
        for (double& v : b.data) v = static_cast<double>(splitmix64(state) % 7) - 3.0;
        const Matrix got = matmul(a, b);
        for (std::size_t i = 0; i < r; ++i) {
            for (std::size_t j = 0; j < c; ++j) {
                double want = 0.0;
                for (std::size_t t = 0; t < k; ++t) want += a.at(i, t) * b.at(t, j);
                REQUIRE(got.at(i, j) == want);  // integer-valued, so exact
            }
        }
    }
}

TEST_CASE("matmul rejects mismatched shapes and propagates NaN") {
    Matrix a(2, 3), b(2, 2);
    CHECK_THROWS_AS(matmul(a, b), config_error);

    Matrix x(1, 2), y(2, 1);
    x.data = {0.0, std::numeric_limits<double>::quiet_NaN()};
    y.data = {1.0, 0.0};
    CHECK(std::isnan(matmul(x, y).at(0, 0)));
}

TEST_CASE("matmul_nt equals matmul with an explicit transpose") {
    std::uint64_t state = 3;
    Matrix a(3, 4), b(5, 4);
    for (double& v : a.data) v = uniform_open01(state);
    for (double& v : b.data) v = uniform_open01(state);
    Matrix bt(4, 5);
    for (std::size_t i = 0; i < b.rows; ++i) {
        for (std::size_t j = 0; j < b.cols; ++j) bt.at(j, i) = b.at(i, j);
    }
    // Both accumulate over the inner index in ascending order, so the
    // results are bit-identical, not merely close.
    CHECK(matmul_nt(a, b) == matmul(a, bt));
}

TEST_CASE("softmax rows are normalized, masked entries are exact zeros") {
    Matrix s(2, 3);
    s.data = {0.5, 1.5, kMaskedScore + 1.5, 2.0, 2.0, 2.0};
    const Matrix p = softmax_rows(s);
    CHECK(p.at(0, 2) == 0.0);
    CHECK(p.at(0, 0) + p.at(0, 1) + p.at(0, 2) == Catch::Approx(1.0).epsilon(1e-12));
    for (std::size_t j = 0; j < 3; ++j) {
        CHECK(p.at(1, j) == 1.0 / 3.0);  // all-equal row comes out exactly uniform
    }
}

TEST_CASE("causal mask blocks strictly-upper entries only") {
    const Matrix m = causal_mask(3);
    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t j = 0; j < 3; ++j) {
            CHECK(m.at(i, j) == (j > i ? kMaskedScore : 0.0));
        }
    }
    CHECK_THROWS_AS(causal_mask(0), config_error);
}

TEST_CASE("splitmix64 reproduces the published sequence for seed 0") {
    std::uint64_t state = 0;
    CHECK(splitmix64(state) == 0xe220a8397b1dcdafull);
    CHECK(splitmix64(state) == 0x6e789e6aa1b965f4ull);
    CHECK(splitmix64(state) == 0x06c45d188009454full);
}

TEST_CASE("uniform draws stay in (0, 1]") {
    std::uint64_t state = 42;
    for (int i = 0; i < 10000; ++i) {
        const double u = uniform_open01(state);
        REQUIRE(u > 0.0);
        REQUIRE(u <= 1.0);
    }
}

TEST_CASE("seeded_normal is deterministic with roughly correct moments") {
    const Matrix a = seeded_normal(100, 100, 9, 2.0);
    const Matrix b = seeded_normal(100, 100, 9, 2.0);
    CHECK(a == b);
    CHECK_FALSE(a == seeded_normal(100, 100, 10, 2.0));

    double mean = 0.0;
    for (double v : a.data) mean += v;
    mean /= static_cast<double>(a.data.size());
    double var = 0.0;
    for (double v : a.data) var += (v - mean) * (v - mean);
    var /= static_cast<double>(a.data.size());
    CHECK(std::abs(mean) < 0.1);
    CHECK(var == Catch::Approx(4.0).epsilon(0.1));
}

TEST_CASE("derive_seed decorrelates adjacent streams") {
    CHECK(derive_seed(1, 0) != derive_seed(1, 1));
    CHECK(derive_seed(1, 0) != derive_seed(2, 0));
}

TEST_CASE("rms_normalize matches the closed form") {
    const std::vector<double> x = {3.0, 4.0};
    const std::vector<double> n = rms_normalize(x);
    const double inv = 1.0 / std::sqrt(12.5 + kRmsEpsilon);
    CHECK(n[0] == 3.0 * inv);
    CHECK(n[1] == 4.0 * inv);
    CHECK_THROWS_AS(rms_normalize({}), config_error);

    Matrix m(2, 2);
    m.data = {3.0, 4.0, -1.0, 1.0};
    const Matrix rows = rms_normalize_rows(m);
    CHECK(rows.at(0, 0) == n[0]);
    CHECK(rows.at(0, 1) == n[1]);
    const std::vector<double> second = rms_normalize({-1.0, 1.0});
    CHECK(rows.at(1, 0) == second[0]);
    CHECK(rows.at(1, 1) == second[1]);
}

TEST_CASE("silu fixes zero and is asymptotically linear") {
    CHECK(silu(0.0) == 0.0);
    CHECK(silu(30.0) == Catch::Approx(30.0).epsilon(1e-9));
    CHECK(silu(-30.0) == Catch::Approx(0.0).margin(1e-9));
}

TEST_CASE("sinusoidal position 0 alternates 0 and 1") {
    const std::vector<double> p = sinusoidal_position(0, 6);
    CHECK(p[0] == 0.0);
    CHECK(p[1] == 1.0);
    CHECK(p[2] == 0.0);
    CHECK(p[3] == 1.0);
    CHECK_THROWS_AS(sinusoidal_position(0, 0), config_error);
}

TEST_CASE("positions produce distinct encodings") {
    CHECK(sinusoidal_position(1, 8) != sinusoidal_position(2, 8));
}

TEST_CASE("argmax breaks ties toward the lowest index") {
    CHECK(argmax({1.0, 3.0, 3.0, 2.0}) == 1);
    CHECK(argmax({5.0}) == 0);
    CHECK_THROWS_AS(argmax({}), state_error);
}

TEST_CASE("keep_rows selects and validates row indices") {
    Matrix m(3, 2);
    m.data = {1, 2, 3, 4, 5, 6};
    const Matrix kept = keep_rows(m, {0, 2});
    REQUIRE(kept.rows == 2);
    CHECK(kept.at(0, 0) == 1.0);
    CHECK(kept.at(1, 0) == 5.0);
    CHECK_THROWS_AS(keep_rows(m, {3}), state_error);
    CHECK_THROWS_AS(keep_rows(m, {-1}), state_error);
}

TEST_CASE("all_finite flags NaN and infinity") {
    Matrix m(1, 2);
    m.data = {1.0, 2.0};
    CHECK(all_finite(m));
    m.data[1] = std::numeric_limits<double>::infinity();
    CHECK_FALSE(all_finite(m));
}
