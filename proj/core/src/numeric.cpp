#include "iuq/numeric.hpp"

#include <charconv>
#include <cstring>

namespace iuq {

std::string format_double(double v) {
  char buf[40];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, ptr);
}

}  // namespace iuq
