#pragma once

#include <string>

namespace infoacq {

// Shortest round-trip-safe rendering with 17 significant digits.
std::string fmt17(double x);

}  // namespace infoacq
