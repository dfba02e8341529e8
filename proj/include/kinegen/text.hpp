#pragma once

#include <charconv>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace kinegen::text {

/// Shortest representation that round-trips to the same double.
inline std::string format_double(double v)
{
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

std::vector<std::string_view> split(std::string_view line, char sep = ',');

/// Strict parses: the whole field must be consumed. Return false on failure.
bool parse_double(std::string_view s, double& out);
bool parse_size(std::string_view s, std::size_t& out);

std::string read_file(const std::filesystem::path& path);
/// Writes through a temporary sibling and renames, so readers never see a partial file.
void write_file(const std::filesystem::path& path, std::string_view contents);

}  // namespace kinegen::text
