#pragma once

#include <filesystem>
#include <string>

namespace dcmd::detail {

std::string read_file(const std::filesystem::path& path);
/// Writes to `path.tmp`, then renames over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

}  // namespace dcmd::detail
