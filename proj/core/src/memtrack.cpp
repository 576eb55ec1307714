#include "ccconv/memtrack.hpp"

#include <atomic>

namespace ccconv::memtrack {

namespace {
std::atomic<std::size_t> g_current{0};
std::atomic<std::size_t> g_peak{0};
}  // namespace

void add(std::size_t bytes) {
  std::size_t now = g_current.fetch_add(bytes) + bytes;
  std::size_t prev = g_peak.load();
  while (now > prev && !g_peak.compare_exchange_weak(prev, now)) {
  }
}

void sub(std::size_t bytes) { g_current.fetch_sub(bytes); }

std::size_t current() { return g_current.load(); }

std::size_t peak() { return g_peak.load(); }

void reset_peak() { g_peak.store(g_current.load()); }

}  // namespace ccconv::memtrack
