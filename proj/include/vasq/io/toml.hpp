#pragma once

// Minimal TOML reader covering what run configs use: comments, [section]
// headers (flattened into dotted keys), and `key = value` lines with string,
// boolean, number, or (possibly nested) array values. Anything outside that
// subset is rejected with the file name and line number.

#include <cctype>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "vasq/core.hpp"

namespace vasq {

struct TomlValue {
  enum class Kind { Boolean, Number, String, Array } kind = Kind::Number;
  bool boolean = false;
  double number = 0.0;
  std::string string;
  std::vector<TomlValue> array;
};

// Dotted-key map: `tau = ...` under `[cascade]` lands at "cascade.tau".
using TomlTable = std::map<std::string, TomlValue>;

namespace detail {

struct TomlCursor {
  const std::string& text;
  std::size_t pos = 0;
  std::string where;  // "file:line" for error messages

  [[noreturn]] void fail(const std::string& msg) const {
    throw validation_error(where + ": " + msg);
  }
  void skip_space() {
    while (pos < text.size() && (text[pos] == ' ' || text[pos] == '\t')) ++pos;
  }
  bool done() const { return pos >= text.size() || text[pos] == '#'; }
};

inline TomlValue parse_toml_value(TomlCursor& c);

inline TomlValue parse_toml_array(TomlCursor& c) {
  TomlValue v;
  v.kind = TomlValue::Kind::Array;
  ++c.pos;  // consume '['
  c.skip_space();
  while (true) {
    if (c.pos >= c.text.size()) c.fail("unterminated array");
    if (c.text[c.pos] == ']') {
      ++c.pos;
      return v;
    }
    v.array.push_back(parse_toml_value(c));
    c.skip_space();
    if (c.pos < c.text.size() && c.text[c.pos] == ',') {
      ++c.pos;
      c.skip_space();
    } else if (c.pos >= c.text.size() || c.text[c.pos] != ']') {
      c.fail("expected ',' or ']' in array");
    }
  }
}

inline TomlValue parse_toml_value(TomlCursor& c) {
  c.skip_space();
  if (c.pos >= c.text.size()) c.fail("missing value");
  const char ch = c.text[c.pos];
  TomlValue v;
  if (ch == '[') return parse_toml_array(c);
  if (ch == '"') {
    v.kind = TomlValue::Kind::String;
    ++c.pos;
    while (c.pos < c.text.size() && c.text[c.pos] != '"') {
      if (c.text[c.pos] == '\\') c.fail("escape sequences are not supported in strings");
      v.string += c.text[c.pos++];
    }
    if (c.pos >= c.text.size()) c.fail("unterminated string");
    ++c.pos;
    return v;
  }
  if (c.text.compare(c.pos, 4, "true") == 0) {
    v.kind = TomlValue::Kind::Boolean;
    v.boolean = true;
    c.pos += 4;
    return v;
  }
  if (c.text.compare(c.pos, 5, "false") == 0) {
    v.kind = TomlValue::Kind::Boolean;
    v.boolean = false;
    c.pos += 5;
    return v;
  }
  // number: delegate to strtod and require it to consume something sensible
  const char* start = c.text.c_str() + c.pos;
  char* end = nullptr;
  v.number = std::strtod(start, &end);
  if (end == start) c.fail("cannot parse value starting at '" + std::string(1, ch) + "'");
  c.pos += std::size_t(end - start);
  return v;
}

}  // namespace detail

inline TomlTable parse_toml(std::istream& in, const std::string& name) {
  TomlTable table;
  std::string section;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string where = name + ":" + std::to_string(lineno);
    detail::TomlCursor c{line, 0, where};
    c.skip_space();
    if (c.done()) continue;

    if (line[c.pos] == '[') {
      const auto close = line.find(']', c.pos);
      if (close == std::string::npos) c.fail("unterminated section header");
      section = line.substr(c.pos + 1, close - c.pos - 1);
      if (section.empty()) c.fail("empty section name");
      c.pos = close + 1;
      c.skip_space();
      if (!c.done()) c.fail("trailing characters after section header");
      continue;
    }

    std::string key;
    while (c.pos < line.size() &&
           (std::isalnum(static_cast<unsigned char>(line[c.pos])) || line[c.pos] == '_' ||
            line[c.pos] == '.' || line[c.pos] == '-'))
      key += line[c.pos++];
    if (key.empty()) c.fail("expected a key");
    c.skip_space();
    if (c.pos >= line.size() || line[c.pos] != '=') c.fail("expected '=' after key '" + key + "'");
    ++c.pos;

    TomlValue value = detail::parse_toml_value(c);
    c.skip_space();
    if (!c.done()) c.fail("trailing characters after value for key '" + key + "'");

    const std::string full = section.empty() ? key : section + "." + key;
    if (table.count(full)) c.fail("duplicate key '" + full + "'");
    table.emplace(full, std::move(value));
  }
  return table;
}

inline TomlTable parse_toml_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw validation_error("cannot open config file " + path.string());
  return parse_toml(in, path.filename().string());
}

}  // namespace vasq
