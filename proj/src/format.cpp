#include "mcre/format.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <limits>

#include "mcre/error.hpp"

namespace mcre {

std::string format_double(double value) {
  if (std::isnan(value)) return "NA";
  std::array<char, 32> buf{};
  const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
  return std::string(buf.data(), ptr);
}

std::string format_fixed(double value, int decimals) {
  if (std::isnan(value)) return "NA";
  std::array<char, 64> buf{};
  const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value, std::chars_format::fixed, decimals);
  return std::string(buf.data(), ptr);
}

double parse_double(const std::string& text) {
  if (text == "NA") return std::numeric_limits<double>::quiet_NaN();
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size()) throw Error("not a number: '" + text + "'");
  return v;
}

}  // namespace mcre
