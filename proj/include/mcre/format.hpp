#pragma once

#include <string>

namespace mcre {

/// Shortest decimal text that parses back to exactly `value`; "NA" for NaN.
std::string format_double(double value);

/// Fixed-point with the given number of decimals.
std::string format_fixed(double value, int decimals);

/// Parses a double written by format_double; "NA" yields NaN.
double parse_double(const std::string& text);

}  // namespace mcre
