#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>

namespace hybridrag {

/// Flat key = value configuration. Lines starting with '#' are comments,
/// keys are case-sensitive, later assignments win.
///
///     # defaults for the hybridrag CLI
///     chunk_size = 350
///     sparse_w = 0.3
class Config {
 public:
  /// Throws Error(kParseError) naming the offending line.
  static Config parse(std::string_view text);
  static Config load(const std::filesystem::path& path);

  bool contains(const std::string& key) const { return entries_.count(key) != 0; }
  std::optional<std::string> get(const std::string& key) const;
  std::string get_string(const std::string& key, std::string fallback) const;
  /// Typed getters throw Error(kInvalidArgument) when the value does not parse.
  double get_double(const std::string& key, double fallback) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  void set(std::string key, std::string value) { entries_[std::move(key)] = std::move(value); }
  const std::map<std::string, std::string>& entries() const noexcept { return entries_; }

 private:
  std::map<std::string, std::string> entries_;
};

/// Loads a .env style file (KEY=VALUE, optional quotes, optional "export ")
/// into the process environment. Existing variables are kept unless
/// overwrite is set. Returns the number of variables set. A missing file is
/// not an error.
std::size_t load_env_file(const std::filesystem::path& path, bool overwrite = false);

std::optional<std::string> env_value(const char* name);

}  // namespace hybridrag
