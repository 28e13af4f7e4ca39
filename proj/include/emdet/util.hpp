#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace emdet {

/// Shortest decimal form that round-trips the value exactly. Used by every
/// text writer so that parse -> serialize is byte-stable.
std::string format_number(double v);
std::string format_number(float v);

/// FNV-1a over a byte string; stable across platforms, used for config hashes.
std::uint64_t fnv1a(std::string_view bytes);
std::string to_hex(std::uint64_t v);

/// Splits on runs of whitespace, skipping leading/trailing blanks.
std::vector<std::string_view> split_ws(std::string_view line);

bool parse_double(std::string_view token, double& out);
bool parse_int(std::string_view token, long long& out);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view content);
std::vector<std::uint8_t> read_binary_file(const std::filesystem::path& path);
void write_binary_file(const std::filesystem::path& path, const void* data, std::size_t bytes);

/// Runs fn(begin..end) over [0, count) split into contiguous chunks, one per
/// worker. Results must not depend on chunking; workers <= 1 runs inline.
void parallel_chunks(int count, int workers, const std::function<void(int, int)>& fn);

}  // namespace emdet
