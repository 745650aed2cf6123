#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace stflow::csv {

/// Splits one CSV record into fields (RFC 4180 quoting, `""` escapes).
/// A trailing `\r` is ignored. Returns false when a quoted field is not
/// closed on this line.
bool split_line(std::string_view line, std::vector<std::string>& fields);

/// Quotes a field if it contains a comma, quote or newline.
std::string escape(std::string_view field);

/// Shortest decimal text that round-trips to the same double.
std::string format_double(double v);

}  // namespace stflow::csv
