#pragma once

#include <cmath>
#include <vector>

#include "santa/matrix.hpp"
#include "santa/rng.hpp"

namespace santa::test {

inline Matrix gaussian_matrix(std::size_t rows, std::size_t cols, RngStream& s, double scale = 1.0) {
  Matrix m(rows, cols);
  for (double& x : m.data()) x = s.normal() * scale;
  return m;
}

inline std::vector<double> gaussian_vector(std::size_t n, RngStream& s, double scale = 1.0) {
  std::vector<double> v(n);
  for (double& x : v) x = s.normal() * scale;
  return v;
}

inline AttentionProblem gaussian_problem(std::size_t n_keys, std::size_t d, std::size_t heads,
                                         std::size_t kv_heads, std::uint64_t seed) {
  RngStream s(seed);
  AttentionProblem p{HeadGeometry(heads, kv_heads, d), gaussian_matrix(heads, d, s), {}, {},
                     1.0 / std::sqrt(static_cast<double>(d))};
  for (std::size_t k = 0; k < kv_heads; ++k) {
    p.keys.push_back(gaussian_matrix(n_keys, d, s));
    p.values.push_back(gaussian_matrix(n_keys, d, s));
  }
  return p;
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace santa::test

namespace santa::test {

// One KV head; query h is e_h and key column h carries head h's logits, so
// head h's scores are exactly logits[h] (scale 1).
inline AttentionProblem logits_problem(const std::vector<std::vector<double>>& logits,
                                       std::size_t d, std::uint64_t seed) {
  const std::size_t heads = logits.size();
  const std::size_t n = logits.front().size();
  AttentionProblem p{HeadGeometry(heads, 1, d), Matrix(heads, d), {Matrix(n, d)}, {}, 1.0};
  for (std::size_t h = 0; h < heads; ++h) {
    p.queries(h, h) = 1.0;
    for (std::size_t j = 0; j < n; ++j) p.keys[0](j, h) = logits[h][j];
  }
  RngStream s(seed);
  p.values.push_back(gaussian_matrix(n, d, s));
  return p;
}

}  // namespace santa::test
