#pragma once

#include <cstdio>
#include <string>

namespace rmbench {

// Shortest round-trip decimal form; report files must be byte-stable across
// reruns, so all float formatting funnels through these two.
inline std::string fmt_full(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string fmt_fixed(double v, int prec = 2) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.*f", prec, v);
  return buf;
}

}  // namespace rmbench
