#include <numeric>

#include "doctest.h"
#include "helpers.hpp"
#include "santa/numeric.hpp"

using namespace santa;

TEST_SUITE("numeric") {

TEST_CASE("softmax examples") {
  auto p = softmax_stable(std::vector<double>{0, 0, 0, 0});
  for (double x : p) CHECK(x == doctest::Approx(0.25).epsilon(1e-15));
  p = softmax_stable(std::vector<double>{1000, 1000});
  CHECK(p[0] == 0.5);
  CHECK(p[1] == 0.5);
  p = softmax_stable(std::vector<double>{std::log(1.0), std::log(3.0)});
  CHECK(std::abs(p[0] - 0.25) < 1e-15);
  CHECK(std::abs(p[1] - 0.75) < 1e-15);
  CHECK_THROWS_WITH(softmax_stable(std::vector<double>{}), "empty distribution");
  CHECK_THROWS(softmax_stable(std::vector<double>{0.0, std::nan("")}));
}

TEST_CASE("softmax is a probability vector and shift invariant") {
  RngStream s(11);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> logits(1 + s.below(64));
    for (double& x : logits) x = (s.uniform() * 2.0 - 1.0) * 1e4;
    const auto p = softmax_stable(logits);
    CHECK(std::abs(std::accumulate(p.begin(), p.end(), 0.0) - 1.0) < 1e-12);
    for (double x : p) CHECK(x >= 0.0);
    auto shifted = logits;
    for (double& x : shifted) x += 37.5;
    const auto q = softmax_stable(shifted);
    CHECK(test::max_abs_diff(p, q) < 1e-12);
  }
}

TEST_CASE("scores examples") {
  CHECK(scores(std::vector<double>{1, 0, 0}, Matrix::identity(3), 1.0) == std::vector<double>{1, 0, 0});
  const auto k = Matrix::from_rows({{1, 0}, {0, 1}, {1, 1}});
  CHECK(scores(std::vector<double>{1, 1}, k, 1.0) == std::vector<double>{1, 1, 2});
  CHECK(scores(std::vector<double>{0, 0}, k, 1.0) == std::vector<double>{0, 0, 0});
  CHECK_THROWS(scores(std::vector<double>{1, 1, 1}, k, 1.0));
  CHECK(default_scale(4) == 0.5);
}

TEST_CASE("uniform mean over a million draws") {
  RngStream s(2024);
  double sum = 0.0;
  for (int i = 0; i < 1000000; ++i) sum += s.uniform();
  const double m = sum / 1e6;
  CHECK(m >= 0.497);
  CHECK(m <= 0.503);
}

TEST_CASE("matrix and geometry invariants") {
  CHECK_THROWS(Matrix(2, 2, std::vector<double>{1, 2, 3}));
  CHECK_THROWS(Matrix(1, 1, std::vector<double>{std::nan("")}));
  CHECK_THROWS(HeadGeometry(6, 4, 8));
  HeadGeometry g(8, 2, 16);
  CHECK(g.group_size() == 4);
  CHECK(g.kv_head_of(5) == 1);
  auto p = test::gaussian_problem(8, 4, 2, 1, 1);
  CHECK_NOTHROW(p.validate());
  p.values[0] = Matrix(7, 4);
  CHECK_THROWS(p.validate());
}

TEST_CASE("parallel_for output is independent of thread count") {
  for (std::size_t threads : {1u, 2u, 5u}) {
    std::vector<std::size_t> out(37, 0);
    parallel_for(out.size(), threads, [&](std::size_t i) { out[i] = i * i; });
    for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i] == i * i);
  }
  CHECK_THROWS(parallel_for(10, 3, [](std::size_t i) {
    if (i == 7) throw std::runtime_error("boom");
  }));
}

}
