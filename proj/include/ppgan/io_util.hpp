#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace ppgan {

std::vector<unsigned char> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const unsigned char> bytes);
void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);
/// Creates the directory (and parents); throws RuntimeFailure if that fails.
void ensure_directory(const std::filesystem::path& dir);

} // namespace ppgan
