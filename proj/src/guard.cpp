#include "nngls/guard.hpp"

#include <atomic>
#include <stdexcept>
#include <string>

namespace nngls {

namespace {
// default admits the largest dense oracle path (5000-point simulation)
std::atomic<std::size_t> g_cap{25'000'000};
}  // namespace

std::size_t dense_entry_cap() { return g_cap.load(); }

void set_dense_entry_cap(std::size_t cap) { g_cap.store(cap); }

void check_dense_alloc(std::size_t rows, std::size_t cols, const char* what) {
  if (rows != 0 && rows * cols > g_cap.load()) {
    throw std::runtime_error(std::string(what) + ": dense allocation of " + std::to_string(rows) + "x" +
                             std::to_string(cols) + " exceeds the configured cap");
  }
}

DenseCapScope::DenseCapScope(std::size_t cap) : previous_(dense_entry_cap()) { set_dense_entry_cap(cap); }

DenseCapScope::~DenseCapScope() { set_dense_entry_cap(previous_); }

}  // namespace nngls
