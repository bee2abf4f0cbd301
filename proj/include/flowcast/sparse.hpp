#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "flowcast/error.hpp"

namespace flowcast {

using NodeId = std::uint32_t;

struct Entry {
  NodeId col;
  double value;

  friend bool operator==(const Entry&, const Entry&) = default;
};

using SparseRow = std::vector<Entry>;

/// Row-major sparse matrix with rows kept sorted by column. Structural zeros
/// are never stored.
class SparseMatrix {
 public:
  SparseMatrix() = default;
  explicit SparseMatrix(std::size_t n) : n_(n), rows_(n) {}

  std::size_t size() const noexcept { return n_; }

  std::span<const Entry> row(NodeId i) const { return rows_.at(i); }

  /// Replaces row i. Entries must be sorted by column, unique, and in range.
  void set_row(NodeId i, SparseRow row) {
    for (std::size_t k = 0; k < row.size(); ++k) {
      if (row[k].col >= n_) throw DimensionError("sparse column out of range");
      if (k > 0 && row[k - 1].col >= row[k].col)
        throw DimensionError("sparse row not strictly sorted by column");
    }
    rows_.at(i) = std::move(row);
  }

  void clear_row(NodeId i) { rows_.at(i).clear(); }

  double at(NodeId i, NodeId j) const {
    const auto& r = rows_.at(i);
    auto it = std::lower_bound(r.begin(), r.end(), j,
                               [](const Entry& e, NodeId c) { return e.col < c; });
    return (it != r.end() && it->col == j) ? it->value : 0.0;
  }

  bool contains(NodeId i, NodeId j) const { return at(i, j) != 0.0; }

  std::size_t nnz() const noexcept {
    std::size_t n = 0;
    for (const auto& r : rows_) n += r.size();
    return n;
  }

  double row_sum(NodeId i) const {
    double s = 0.0;
    for (const auto& e : rows_.at(i)) s += e.value;
    return s;
  }

  SparseMatrix transposed() const {
    std::vector<SparseRow> t(n_);
    for (NodeId i = 0; i < n_; ++i)
      for (const auto& e : rows_[i]) t[e.col].push_back({i, e.value});
    SparseMatrix out(n_);
    out.rows_ = std::move(t);  // built in ascending i, so already sorted
    return out;
  }

  friend bool operator==(const SparseMatrix&, const SparseMatrix&) = default;

 private:
  std::size_t n_ = 0;
  std::vector<SparseRow> rows_;
};

}  // namespace flowcast
