#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace aslice::detail {

// Whole-file binary read; throws DataError when the file cannot be opened.
std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

}  // namespace aslice::detail
