#ifndef FOFSEG_CONFIG_HPP
#define FOFSEG_CONFIG_HPP

// Flat `key = value` text files. Blank lines and `#` comments are ignored.

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fofseg/error.hpp"

namespace fofseg {

struct KeyValue {
  std::string key;
  std::string value;
  int line = 0;
};

inline std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

inline std::vector<KeyValue> parse_key_values(std::istream& in, Errc errc = Errc::invalid_config) {
  std::vector<KeyValue> out;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw Error(errc, "line " + std::to_string(number) + ": expected key = value");
    }
    KeyValue kv{trim(std::string_view(body).substr(0, eq)),
                trim(std::string_view(body).substr(eq + 1)), number};
    if (kv.key.empty()) throw Error(errc, "line " + std::to_string(number) + ": empty key");
    out.push_back(std::move(kv));
  }
  return out;
}

inline std::vector<KeyValue> load_key_values(const std::filesystem::path& path,
                                             Errc errc = Errc::invalid_config) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::io_failure, "cannot open " + path.string());
  return parse_key_values(in, errc);
}

/// Splits "key=value" as given on a command line.
inline KeyValue split_assignment(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos) throw Error(Errc::invalid_config, "expected key=value: " + text);
  return {trim(std::string_view(text).substr(0, eq)), trim(std::string_view(text).substr(eq + 1)),
          0};
}

inline double parse_double(const KeyValue& kv, Errc errc = Errc::invalid_config) {
  std::istringstream in(kv.value);
  double value = 0.0;
  in >> value;
  if (!in || !(in >> std::ws).eof()) {
    throw Error(errc, kv.key + ": not a number: '" + kv.value + "'");
  }
  return value;
}

inline std::int64_t parse_int(const KeyValue& kv, Errc errc = Errc::invalid_config) {
  std::int64_t value = 0;
  const char* begin = kv.value.data();
  const char* end = begin + kv.value.size();
  const auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end) {
    throw Error(errc, kv.key + ": not an integer: '" + kv.value + "'");
  }
  return value;
}

/// Numbers separated by commas and/or whitespace.
inline std::vector<double> parse_double_list(const KeyValue& kv, Errc errc = Errc::invalid_config) {
  std::string text = kv.value;
  for (char& c : text) {
    if (c == ',') c = ' ';
  }
  std::istringstream in(text);
  std::vector<double> out;
  std::string token;
  while (in >> token) out.push_back(parse_double({kv.key, token, kv.line}, errc));
  return out;
}

}  // namespace fofseg

#endif  // FOFSEG_CONFIG_HPP
