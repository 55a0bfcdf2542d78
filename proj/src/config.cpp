#include "hybridrag/config.hpp"

#include <charconv>
#include <cstdlib>
#include <system_error>

#include "hybridrag/error.hpp"
#include "hybridrag/util.hpp"

namespace hybridrag {

namespace {

std::string unquote(std::string_view v) {
  if (v.size() >= 2 && (v.front() == '"' || v.front() == '\'') && v.back() == v.front()) {
    return std::string(v.substr(1, v.size() - 2));
  }
  return std::string(v);
}

}  // namespace

Config Config::parse(std::string_view text) {
  Config out;
  std::size_t line_no = 0;
  for (const auto& raw : split(text, '\n')) {
    ++line_no;
    auto line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw Error(ErrorCode::kParseError,
                  "config line " + std::to_string(line_no) + ": expected key = value");
    }
    auto key = trim(line.substr(0, eq));
    if (key.empty()) {
      throw Error(ErrorCode::kParseError, "config line " + std::to_string(line_no) + ": empty key");
    }
    out.entries_[std::string(key)] = unquote(trim(line.substr(eq + 1)));
  }
  return out;
}

Config Config::load(const std::filesystem::path& path) { return parse(read_file(path)); }

std::optional<std::string> Config::get(const std::string& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

std::string Config::get_string(const std::string& key, std::string fallback) const {
  auto v = get(key);
  return v ? *v : std::move(fallback);
}

double Config::get_double(const std::string& key, double fallback) const {
  auto v = get(key);
  if (!v) return fallback;
  double out = 0.0;
  auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
  if (ec != std::errc() || ptr != v->data() + v->size()) {
    throw Error(ErrorCode::kInvalidArgument, "config key " + key + " is not a number");
  }
  return out;
}

std::int64_t Config::get_int(const std::string& key, std::int64_t fallback) const {
  auto v = get(key);
  if (!v) return fallback;
  std::int64_t out = 0;
  auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
  if (ec != std::errc() || ptr != v->data() + v->size()) {
    throw Error(ErrorCode::kInvalidArgument, "config key " + key + " is not an integer");
  }
  return out;
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  auto v = get(key);
  if (!v) return fallback;
  auto s = ascii_lower(*v);
  if (s == "1" || s == "true" || s == "yes" || s == "on") return true;
  if (s == "0" || s == "false" || s == "no" || s == "off") return false;
  throw Error(ErrorCode::kInvalidArgument, "config key " + key + " is not a boolean");
}

std::size_t load_env_file(const std::filesystem::path& path, bool overwrite) {
  std::error_code ec;
  if (!std::filesystem::is_regular_file(path, ec)) return 0;
  std::size_t n = 0;
  for (const auto& raw : split(read_file(path), '\n')) {
    auto line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    if (line.substr(0, 7) == "export ") line = trim(line.substr(7));
    auto eq = line.find('=');
    if (eq == std::string_view::npos) continue;
    std::string key(trim(line.substr(0, eq)));
    if (key.empty()) continue;
    std::string value = unquote(trim(line.substr(eq + 1)));
    if (!overwrite && std::getenv(key.c_str()) != nullptr) continue;
    if (::setenv(key.c_str(), value.c_str(), 1) == 0) ++n;
  }
  return n;
}

std::optional<std::string> env_value(const char* name) {
  const char* v = std::getenv(name);
  if (v == nullptr || *v == '\0') return std::nullopt;
  return std::string(v);
}

}  // namespace hybridrag
