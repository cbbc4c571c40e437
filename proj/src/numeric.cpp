#include "santa/numeric.hpp"

#include <algorithm>
#include <exception>
#include <limits>
#include <mutex>
#include <stdexcept>
#include <thread>

namespace santa {

namespace {

template <typename T>
std::vector<T> softmax_impl(std::span<const T> logits) {
  if (logits.empty()) throw std::invalid_argument("empty distribution");
  T max_logit = -std::numeric_limits<T>::infinity();
  for (T x : logits) {
    if (std::isnan(x) || x == std::numeric_limits<T>::infinity()) {
      throw std::invalid_argument("softmax: logits must be finite");
    }
    max_logit = std::max(max_logit, x);
  }
  if (max_logit == -std::numeric_limits<T>::infinity()) {
    throw std::invalid_argument("softmax: all logits are -inf");
  }
  std::vector<T> out(logits.size());
  T total = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - max_logit);
    total += out[i];
  }
  const T inv = T{1} / total;
  for (T& x : out) x *= inv;
  return out;
}

}  // namespace

std::vector<double> softmax_stable(std::span<const double> logits) {
  return softmax_impl(logits);
}

std::vector<float> softmax_stable(std::span<const float> logits) {
  return softmax_impl(logits);
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("dot: length mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double l2_norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

std::vector<double> scores(std::span<const double> q, const Matrix& keys, double scale) {
  if (q.size() != keys.cols()) {
    throw std::invalid_argument("scores: query length does not match key width");
  }
  if (!(scale > 0.0)) throw std::invalid_argument("scores: scale must be positive");
  std::vector<double> out(keys.rows());
  for (std::size_t n = 0; n < keys.rows(); ++n) out[n] = dot(q, keys.row(n)) * scale;
  return out;
}

void parallel_for(std::size_t n, std::size_t threads,
                  const std::function<void(std::size_t)>& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::jthread> pool;
  pool.reserve(threads);
  const std::size_t block = (n + threads - 1) / threads;
  for (std::size_t t = 0; t < threads; ++t) {
    const std::size_t begin = t * block;
    const std::size_t end = std::min(n, begin + block);
    if (begin >= end) break;
    pool.emplace_back([&, begin, end] {
      try {
        for (std::size_t i = begin; i < end; ++i) fn(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    });
  }
  pool.clear();
  if (failure) std::rethrow_exception(failure);
}

void AttentionProblem::validate() const {
  const auto& g = geometry;
  if (queries.rows() != g.n_heads() || queries.cols() != g.head_dim()) {
    throw std::invalid_argument("attention problem: queries must be n_heads x head_dim");
  }
  if (keys.size() != g.n_kv_heads() || values.size() != g.n_kv_heads()) {
    throw std::invalid_argument("attention problem: need one K and V per KV head");
  }
  const std::size_t n = n_keys();
  if (n == 0) throw std::invalid_argument("attention problem: no keys");
  for (std::size_t k = 0; k < g.n_kv_heads(); ++k) {
    if (keys[k].rows() != n || values[k].rows() != n || keys[k].cols() != g.head_dim() ||
        values[k].cols() != g.head_dim()) {
      throw std::invalid_argument("attention problem: K/V shape mismatch");
    }
  }
  if (!(scale > 0.0)) throw std::invalid_argument("attention problem: scale must be positive");
}

}  // namespace santa
