#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <limits>

#include "razor/errors.hpp"
#include "razor/tensor.hpp"

using namespace razor;

TEST_CASE("construction and shape accounting") {
    Tensor t = Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6});
    CHECK(t.rank() == 2);
    CHECK(t.rows() == 2);
    CHECK(t.cols() == 3);
    CHECK(t.size() == 6);
    CHECK(t.at(0, 2) == 3);
    CHECK(t.at(1, 0) == 4);

    Tensor v = Tensor::vec({1, 2});
    CHECK(v.rank() == 1);
    Tensor r = Tensor::row({1, 2});
    CHECK(r.rows() == 1);
    CHECK(r.cols() == 2);
    Tensor s = Tensor::scalar(7.0);
    CHECK(s.size() == 1);
    CHECK(shape_size({4, 5}) == 20);
}

TEST_CASE("shape/data length mismatch is rejected") {
    CHECK_THROWS_AS(Tensor({2, 2}, {1.0, 2.0, 3.0}), DimensionError);
    CHECK_THROWS_AS(Tensor::zeros({0, 3}), DimensionError);
}

TEST_CASE("zeros and full") {
    Tensor z = Tensor::zeros({3, 2});
    for (double x : z.data) CHECK(x == 0.0);
    Tensor f = Tensor::full({2, 2}, 0.25);
    for (double x : f.data) CHECK(x == 0.25);
}

TEST_CASE("all_finite flags NaN and infinity") {
    Tensor t = Tensor::vec({1.0, 2.0});
    CHECK(t.all_finite());
    t.data[1] = std::numeric_limits<double>::quiet_NaN();
    CHECK_FALSE(t.all_finite());
    t.data[1] = std::numeric_limits<double>::infinity();
    CHECK_FALSE(t.all_finite());
}

TEST_CASE("sequential reductions match hand values") {
    std::vector<double> a = {1.0, 2.0, 3.0, 4.0};
    std::vector<double> b = {2.0, -1.0, 0.5, 1.0};
    CHECK(seq_sum(a) == 10.0);
    CHECK(seq_dot(a, b) == doctest::Approx(5.5).epsilon(1e-15));
    CHECK(l2_norm(a) == doctest::Approx(std::sqrt(30.0)).epsilon(1e-15));
    CHECK(seq_sum({}) == 0.0);
}

TEST_CASE("seq_sum uses fixed left-to-right order") {
    // With a fixed order the result is bit-reproducible across calls.
    std::vector<double> v;
    for (int i = 0; i < 1000; ++i) v.push_back(std::sin(i) * 1e-3);
    double s1 = seq_sum(v);
    double s2 = seq_sum(v);
    CHECK(std::memcmp(&s1, &s2, sizeof s1) == 0);
}
