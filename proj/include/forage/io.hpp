#pragma once

#include <string>
#include <string_view>

namespace forage::io {

/// Fixed-format decimal used in every CSV we emit ("%.10g").
std::string format_number(double value);

/// Reads a whole file. Throws IoError when it cannot be opened.
std::string read_text_file(const std::string& path);

/// Writes (truncating) a whole file, creating parent directories. Throws
/// IoError on failure.
void write_text_file(const std::string& path, std::string_view content);

}  // namespace forage::io
