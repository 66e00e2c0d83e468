#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace neurotrace {

// Writes to "<path>.tmp" and renames over `path`. Throws UsageError.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

std::string read_file(const std::filesystem::path& path);

}  // namespace neurotrace
