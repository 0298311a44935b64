#pragma once

#include <cstddef>

namespace nngls {

// Cap on the number of entries an n-by-n dense materialization may hold.
// Everything on the training/prediction path works on at-most m-by-m blocks;
// the only dense users are the desk-scale oracles (dense simulation,
// discrepancy diagnostics, covariance matrices in tests). Lowering the cap
// around a large run asserts that no dense allocation sneaks in.
std::size_t dense_entry_cap();
void set_dense_entry_cap(std::size_t cap);

// Throws std::runtime_error naming `what` if rows*cols exceeds the cap.
void check_dense_alloc(std::size_t rows, std::size_t cols, const char* what);

struct DenseCapScope {
  explicit DenseCapScope(std::size_t cap);
  ~DenseCapScope();
  DenseCapScope(const DenseCapScope&) = delete;
  DenseCapScope& operator=(const DenseCapScope&) = delete;

 private:
  std::size_t previous_;
};

}  // namespace nngls
