#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace rhomp {

/// Round-trip decimal form with 17 significant digits.
std::string format_real(double x);

/// Fields of a tab-separated line.
std::vector<std::string_view> split_tabs(std::string_view line);

/// Strict numeric parsing; throws DataError mentioning `what` on failure.
double parse_real(std::string_view s, std::string_view what);
std::uint64_t parse_uint(std::string_view s, std::string_view what);

/// Writes through a sibling temp file and renames it over `path`.
/// Throws IoError when the file cannot be written.
void write_file_atomic(const std::filesystem::path& path,
                       const std::function<void(std::ostream&)>& writer);

}  // namespace rhomp
