#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace hybridrag {

/// Lowercase hex SHA-256 of raw bytes.
std::string sha256_hex(std::string_view bytes);

std::string base64_encode(std::string_view bytes);
/// Throws Error(kDecodeError) on malformed input.
std::string base64_decode(std::string_view text);

bool is_valid_utf8(std::string_view bytes) noexcept;

/// 64-bit FNV-1a. Stable across hosts and standard libraries.
constexpr std::uint64_t fnv1a64(std::string_view bytes) noexcept {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

/// Unbiased draw from [0, n) using only the raw engine output, so the
/// sequence is identical across standard library implementations
/// (std::uniform_int_distribution is not).
std::uint64_t uniform_index(std::mt19937_64& rng, std::uint64_t n);

/// ISO-8601 UTC timestamp with second resolution, e.g. 2024-05-01T12:00:00Z.
std::string utc_timestamp_now();

std::string ascii_lower(std::string_view text);
std::string_view trim(std::string_view text) noexcept;
std::vector<std::string> split(std::string_view text, char sep);

/// Fixed-point decimal with '.' separator independent of the C++ locale.
std::string format_fixed(double value, int precision = 6);

/// Value of a positive integer environment variable, if set. Throws
/// Error(kInvalidArgument) naming the variable (not its value) otherwise.
std::optional<std::uint64_t> env_positive_int(const char* name);

std::string read_file(const std::filesystem::path& path);
/// Writes to a sibling temp file and renames over the target.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

}  // namespace hybridrag
