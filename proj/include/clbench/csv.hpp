#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace clbench {

/// %.17g: enough digits for a lossless double round trip.
std::string format_double(double value);

std::vector<std::string> split_csv_line(std::string_view line);
double parse_double(std::string_view text);
long long parse_int(std::string_view text);

}  // namespace clbench
