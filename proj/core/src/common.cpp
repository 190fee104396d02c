#include "gait/common.hpp"

#include <atomic>
#include <cmath>
#include <sstream>

namespace gait {

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) os << ',';
    os << s[i];
  }
  os << ']';
  return os.str();
}

int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

namespace {
#ifdef NDEBUG
std::atomic<bool> g_debug_checks{false};
#else
std::atomic<bool> g_debug_checks{true};
#endif
}  // namespace

bool debug_checks_enabled() { return g_debug_checks.load(std::memory_order_relaxed); }
void set_debug_checks(bool on) { g_debug_checks.store(on, std::memory_order_relaxed); }

void check_all_finite(std::string_view what, std::span<const double> values) {
  for (size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      throw NumericError(std::string("non-finite value in ") + std::string(what) +
                         " at flat index " + std::to_string(i));
    }
  }
}

}  // namespace gait
