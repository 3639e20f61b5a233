#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace cbx {

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

std::string to_lower(std::string_view s);
std::string trim(std::string_view s);
std::vector<std::string> split_whitespace(std::string_view s);

// Location of bundled data files (default lexicon, trigger table).
std::filesystem::path data_dir();

}  // namespace cbx
