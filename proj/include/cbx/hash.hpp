#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>

namespace cbx {

std::string sha256_hex(std::string_view data);
std::string sha256_hex(std::span<const unsigned char> data);
std::string sha256_file(const std::filesystem::path& path);

}  // namespace cbx
