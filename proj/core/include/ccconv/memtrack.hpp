#pragma once

#include <cstddef>

namespace ccconv::memtrack {

// Tracks bytes held by live tensor buffers. Peak is monotone until reset.
void add(std::size_t bytes);
void sub(std::size_t bytes);
std::size_t current();
std::size_t peak();
void reset_peak();

}  // namespace ccconv::memtrack
