// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>

namespace mtdao {

/// Shortest round-trip decimal form, '.' separator regardless of locale.
std::string format_number(double value);
/// Empty string for a missing value.
std::string format_number(const std::optional<double>& value);
/// Quotes the field when it contains a comma, quote or newline.
std::string csv_field(const std::string& text);

}  // namespace mtdao
