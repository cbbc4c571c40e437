#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace santa {

/// Dense row-major matrix. Sampled access is expressed through cost ledgers,
/// never through sparse storage.
template <typename T>
class BasicMatrix {
 public:
  using value_type = T;

  BasicMatrix() = default;
  BasicMatrix(std::size_t rows, std::size_t cols, T fill = T{})
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  BasicMatrix(std::size_t rows, std::size_t cols, std::vector<T> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
      throw std::invalid_argument("matrix data length does not match rows x cols");
    }
    for (const T& x : data_) {
      if (!std::isfinite(x)) throw std::invalid_argument("matrix entries must be finite");
    }
  }

  static BasicMatrix from_rows(const std::vector<std::vector<T>>& rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.front().size();
    std::vector<T> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
      if (row.size() != c) throw std::invalid_argument("ragged matrix rows");
      data.insert(data.end(), row.begin(), row.end());
    }
    return BasicMatrix(r, c, std::move(data));
  }

  static BasicMatrix identity(std::size_t n) {
    BasicMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = T{1};
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return data_.empty(); }

  T& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  const T& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<T> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const T> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<const T> data() const { return data_; }
  std::span<T> data() { return data_; }

  friend bool operator==(const BasicMatrix&, const BasicMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

using Matrix = BasicMatrix<double>;
using MatrixF = BasicMatrix<float>;

/// Query/KV head layout. Query head h reads KV head h / group_size.
class HeadGeometry {
 public:
  HeadGeometry(std::size_t n_heads, std::size_t n_kv_heads, std::size_t head_dim)
      : n_heads_(n_heads), n_kv_heads_(n_kv_heads), head_dim_(head_dim) {
    if (n_heads == 0 || n_kv_heads == 0 || head_dim == 0) {
      throw std::invalid_argument("head geometry: counts must be >= 1");
    }
    if (n_heads % n_kv_heads != 0) {
      throw std::invalid_argument("head geometry: n_heads must be a multiple of n_kv_heads");
    }
  }

  std::size_t n_heads() const { return n_heads_; }
  std::size_t n_kv_heads() const { return n_kv_heads_; }
  std::size_t head_dim() const { return head_dim_; }
  std::size_t group_size() const { return n_heads_ / n_kv_heads_; }
  std::size_t kv_head_of(std::size_t head) const { return head / group_size(); }

  friend bool operator==(const HeadGeometry&, const HeadGeometry&) = default;

 private:
  std::size_t n_heads_;
  std::size_t n_kv_heads_;
  std::size_t head_dim_;
};

/// One decode step: a query per head, and per-KV-head key/value caches.
struct AttentionProblem {
  HeadGeometry geometry;
  Matrix queries;              // n_heads x head_dim
  std::vector<Matrix> keys;    // per KV head: n_keys x head_dim
  std::vector<Matrix> values;  // per KV head: n_keys x head_dim
  double scale;

  std::size_t n_keys() const { return keys.empty() ? 0 : keys.front().rows(); }
  std::span<const double> query(std::size_t head) const { return queries.row(head); }
  const Matrix& keys_for(std::size_t head) const { return keys[geometry.kv_head_of(head)]; }
  const Matrix& values_for(std::size_t head) const {
    return values[geometry.kv_head_of(head)];
  }

  // Throws on any shape inconsistency.
  void validate() const;
};

}  // namespace santa
