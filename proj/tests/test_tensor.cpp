#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "gensar/tensor.hpp"

using namespace gensar;

TEST_CASE("vector arithmetic") {
    Vec<double> a{1.0, 2.0, 3.0};
    Vec<double> b{4.0, -1.0, 0.5};
    auto s = a + b;
    CHECK(s[0] == doctest::Approx(5.0));
    CHECK(s[1] == doctest::Approx(1.0));
    CHECK(s[2] == doctest::Approx(3.5));
    auto d = a - b;
    CHECK(d[0] == doctest::Approx(-3.0));
    axpy(2.0, a, b);
    CHECK(b[0] == doctest::Approx(6.0));
    CHECK(b[2] == doctest::Approx(6.5));
}

TEST_CASE("dot and norms accumulate correctly") {
    Vec<double> a{1.0, 2.0, 3.0};
    Vec<double> b{-1.0, 0.5, 2.0};
    CHECK(dot(a, b) == doctest::Approx(1.0 * -1 + 2 * 0.5 + 3 * 2));
    CHECK(squared_norm(a) == doctest::Approx(14.0));
    CHECK(squared_distance(a, b) == doctest::Approx(4.0 + 2.25 + 1.0));
}

TEST_CASE("dimension mismatches throw") {
    Vec<double> a{1.0, 2.0};
    Vec<double> b{1.0, 2.0, 3.0};
    CHECK_THROWS_AS(a + b, DimensionError);
    CHECK_THROWS_AS(dot(a, b), DimensionError);
    CHECK_THROWS_AS(slice(b, 2, 1), DimensionError);
    CHECK_THROWS_AS(slice(b, 0, 4), DimensionError);
}

TEST_CASE("concat and slice round-trip") {
    Vec<double> a{1.0, 2.0};
    Vec<double> b{3.0, 4.0, 5.0};
    auto c = concat(a, b);
    REQUIRE(c.size() == 5);
    CHECK(c[2] == 3.0);
    auto back = slice(c, 0, 2);
    CHECK(back[1] == 2.0);
    auto tail = slice(c, 2, 5);
    CHECK(tail[0] == 3.0);
    CHECK(tail[2] == 5.0);
}

TEST_CASE("matrix storage is row-major") {
    Mat<double> m(2, 3);
    m.at(0, 0) = 1;
    m.at(0, 2) = 2;
    m.at(1, 1) = 3;
    CHECK(m.d[0] == 1);
    CHECK(m.d[2] == 2);
    CHECK(m.d[4] == 3);
    auto r = m.row_vec(1);
    CHECK(r[1] == 3);
    Vec<double> v{7.0, 8.0, 9.0};
    m.set_row(0, v);
    CHECK(m.at(0, 1) == 8.0);
    CHECK_THROWS_AS(m.set_row(0, Vec<double>(2)), DimensionError);
}

TEST_CASE("matvec matches hand computation") {
    Mat<double> w(2, 3);
    double vals[] = {1, 2, 3, 4, 5, 6};
    std::copy(std::begin(vals), std::end(vals), w.d.begin());
    Vec<double> x{1.0, 0.0, -1.0};
    auto y = matvec(w, x);
    CHECK(y[0] == doctest::Approx(-2.0));
    CHECK(y[1] == doctest::Approx(-2.0));
    CHECK_THROWS_AS(matvec(w, Vec<double>(2)), DimensionError);
}

TEST_CASE("finite detection") {
    Vec<double> v{1.0, 2.0};
    CHECK(v.finite());
    v[1] = std::numeric_limits<double>::quiet_NaN();
    CHECK(!v.finite());
    Mat<float> m(1, 2);
    CHECK(m.finite());
    m.at(0, 0) = std::numeric_limits<float>::infinity();
    CHECK(!m.finite());
}
