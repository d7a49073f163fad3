#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace biasforge {

std::string read_text_file(const std::filesystem::path& file);

/// Writes through a sibling temp file and renames, so readers never observe a
/// half-written file (checkpoints rely on this).
void write_text_file(const std::filesystem::path& file, std::string_view contents);

void ensure_directory(const std::filesystem::path& dir);

/// RFC 4180 quoting for one CSV field.
std::string csv_field(std::string_view value);

/// Splits one CSV line, honouring double-quoted fields.
std::vector<std::string> split_csv_line(std::string_view line);

}  // namespace biasforge
