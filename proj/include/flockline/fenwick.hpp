#pragma once

#include <cstddef>
#include <vector>

namespace flockline {

// Fenwick tree over non-negative weights with prefix descent.
template <class T>
class Fenwick {
 public:
  Fenwick() = default;
  explicit Fenwick(const std::vector<T>& leaves) { build(leaves); }

  void build(const std::vector<T>& leaves) {
    n_ = leaves.size();
    tree_.assign(n_ + 1, T(0));
    for (std::size_t i = 1; i <= n_; ++i) {
      tree_[i] += leaves[i - 1];
      std::size_t j = i + (i & (~i + 1));
      if (j <= n_) tree_[j] += tree_[i];
    }
    top_ = 1;
    while (top_ * 2 <= n_) top_ *= 2;
  }

  // Unsigned types wrap correctly, so a delta may be "negative".
  void add(std::size_t i, T delta) {
    for (++i; i <= n_; i += i & (~i + 1)) tree_[i] += delta;
  }

  T prefix(std::size_t count) const {
    T s(0);
    for (std::size_t i = count; i > 0; i -= i & (~i + 1)) s += tree_[i];
    return s;
  }

  // Smallest index i with prefix(i + 1) > target; requires target < total.
  std::size_t find(T target) const {
    std::size_t pos = 0;
    for (std::size_t step = top_; step > 0; step >>= 1) {
      std::size_t nxt = pos + step;
      if (nxt <= n_ && !(target < tree_[nxt])) {
        pos = nxt;
        target -= tree_[nxt];
      }
    }
    return pos;
  }

  std::size_t size() const { return n_; }

 private:
  std::size_t n_ = 0;
  std::size_t top_ = 0;
  std::vector<T> tree_;
};

}  // namespace flockline
