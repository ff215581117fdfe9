#pragma once

#include <filesystem>
#include <map>
#include <string>

namespace streamattack {

/// Reads `key=value` lines. Blank lines and lines starting with '#' are
/// skipped; surrounding whitespace is trimmed. Throws IoError/FormatError.
std::map<std::string, std::string> read_key_values(const std::filesystem::path& path);

/// Formats a double so that it parses back to the same bits.
std::string exact(double v);

double parse_double(const std::string& s, const std::string& key);
long long parse_int(const std::string& s, const std::string& key);

}  // namespace streamattack
