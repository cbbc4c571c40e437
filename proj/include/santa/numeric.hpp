#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "santa/matrix.hpp"

namespace santa {

// Softmax with max subtraction. Entries equal to -inf map to probability 0.
// Throws std::invalid_argument("empty distribution") on empty input.
std::vector<double> softmax_stable(std::span<const double> logits);
std::vector<float> softmax_stable(std::span<const float> logits);

// out[n] = (q . K_n) * scale
std::vector<double> scores(std::span<const double> q, const Matrix& keys, double scale);

inline double default_scale(std::size_t head_dim) {
  return 1.0 / std::sqrt(static_cast<double>(head_dim));
}

double dot(std::span<const double> a, std::span<const double> b);
double l2_norm(std::span<const double> a);

/// Runs fn(i) for i in [0, n) on up to `threads` worker threads. Work is split
/// into contiguous index blocks; callers write results into slot i so output
/// does not depend on the thread count.
void parallel_for(std::size_t n, std::size_t threads,
                  const std::function<void(std::size_t)>& fn);

}  // namespace santa
