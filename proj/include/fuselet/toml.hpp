#pragma once
// Minimal TOML subset for pipeline configs: [tables], [[arrays of tables]],
// `key = value` pairs with string/integer/float/boolean/flat-array values,
// and # comments. Dotted keys, inline tables, multiline strings and dates
// are out of scope and rejected with line-numbered errors.

#include <cctype>
#include <charconv>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fuselet/common.hpp"

namespace fuselet {

struct TomlValue {
  enum class Kind { String, Integer, Float, Boolean, Array };
  Kind kind = Kind::String;
  std::string str;
  std::int64_t integer = 0;
  double real = 0.0;
  bool boolean = false;
  std::vector<TomlValue> array;

  // numeric accessor: integers promote to double
  double as_number() const {
    return kind == Kind::Integer ? static_cast<double>(integer) : real;
  }
};

struct TomlTable {
  std::map<std::string, TomlValue> values;

  const TomlValue* find(const std::string& key) const {
    auto it = values.find(key);
    return it == values.end() ? nullptr : &it->second;
  }
};

struct TomlDoc {
  TomlTable root;                                            // top-level keys
  std::map<std::string, TomlTable> tables;                   // [name]
  std::map<std::string, std::vector<TomlTable>> table_arrays;  // [[name]]
};

namespace detail {

[[noreturn]] inline void toml_fail(std::size_t line, const std::string& what) {
  throw ConfigError("config line " + std::to_string(line) + ": " + what);
}

inline bool bare_key_ok(const std::string& s) {
  if (s.empty()) return false;
  for (char ch : s)
    if (!(std::isalnum(static_cast<unsigned char>(ch)) || ch == '_' || ch == '-'))
      return false;
  return true;
}

inline std::string trim_ws(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// comment starts at the first # outside a quoted string
inline std::string strip_comment(const std::string& line) {
  bool in_str = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (in_str) {
      if (c == '\\') ++i;
      else if (c == '"') in_str = false;
    } else if (c == '"') {
      in_str = true;
    } else if (c == '#') {
      return line.substr(0, i);
    }
  }
  return line;
}

inline void skip_ws(const std::string& s, std::size_t& pos) {
  while (pos < s.size() && (s[pos] == ' ' || s[pos] == '\t')) ++pos;
}

inline TomlValue parse_value(const std::string& s, std::size_t& pos,
                             std::size_t line);

inline TomlValue parse_string(const std::string& s, std::size_t& pos,
                              std::size_t line) {
  TomlValue v;
  v.kind = TomlValue::Kind::String;
  ++pos;  // opening quote
  while (pos < s.size() && s[pos] != '"') {
    char c = s[pos];
    if (c == '\\') {
      ++pos;
      if (pos >= s.size()) toml_fail(line, "dangling escape in string");
      switch (s[pos]) {
        case '"': v.str += '"'; break;
        case '\\': v.str += '\\'; break;
        case 'n': v.str += '\n'; break;
        case 't': v.str += '\t'; break;
        case 'r': v.str += '\r'; break;
        default: toml_fail(line, std::string("unsupported escape \\") + s[pos]);
      }
    } else {
      v.str += c;
    }
    ++pos;
  }
  if (pos >= s.size()) toml_fail(line, "unterminated string");
  ++pos;  // closing quote
  return v;
}

inline TomlValue parse_array(const std::string& s, std::size_t& pos,
                             std::size_t line) {
  TomlValue v;
  v.kind = TomlValue::Kind::Array;
  ++pos;  // '['
  skip_ws(s, pos);
  while (pos < s.size() && s[pos] != ']') {
    v.array.push_back(parse_value(s, pos, line));
    skip_ws(s, pos);
    if (pos < s.size() && s[pos] == ',') {
      ++pos;
      skip_ws(s, pos);
    } else if (pos < s.size() && s[pos] != ']') {
      toml_fail(line, "expected ',' or ']' in array");
    }
  }
  if (pos >= s.size()) toml_fail(line, "unterminated array");
  ++pos;  // ']'
  return v;
}

inline TomlValue parse_scalar_token(const std::string& tok, std::size_t line) {
  if (tok.empty()) toml_fail(line, "missing value");
  TomlValue v;
  if (tok == "true" || tok == "false") {
    v.kind = TomlValue::Kind::Boolean;
    v.boolean = tok == "true";
    return v;
  }
  // integer: optional sign, digits and underscores only
  std::string digits;
  bool is_int = true;
  for (std::size_t i = 0; i < tok.size(); ++i) {
    char c = tok[i];
    if (c == '_') continue;
    if ((c == '+' || c == '-') && i == 0) {
      digits += c;
      continue;
    }
    if (!std::isdigit(static_cast<unsigned char>(c))) {
      is_int = false;
      break;
    }
    digits += c;
  }
  if (is_int && !digits.empty() && digits != "+" && digits != "-") {
    std::int64_t out = 0;
    auto [p, ec] = std::from_chars(digits.data(), digits.data() + digits.size(),
                                   out);
    if (ec != std::errc() || p != digits.data() + digits.size())
      toml_fail(line, "invalid integer '" + tok + "'");
    v.kind = TomlValue::Kind::Integer;
    v.integer = out;
    return v;
  }
  // float (no inf/nan keywords)
  std::string cleaned;
  for (char c : tok)
    if (c != '_') cleaned += c;
  char* end = nullptr;
  double d = std::strtod(cleaned.c_str(), &end);
  if (end != cleaned.c_str() + cleaned.size() || cleaned.empty() ||
      !std::isfinite(d))
    toml_fail(line, "invalid value '" + tok + "'");
  v.kind = TomlValue::Kind::Float;
  v.real = d;
  return v;
}

inline TomlValue parse_value(const std::string& s, std::size_t& pos,
                             std::size_t line) {
  skip_ws(s, pos);
  if (pos >= s.size()) toml_fail(line, "missing value");
  if (s[pos] == '"') return parse_string(s, pos, line);
  if (s[pos] == '[') return parse_array(s, pos, line);
  std::size_t start = pos;
  while (pos < s.size() && s[pos] != ',' && s[pos] != ']' && s[pos] != ' ' &&
         s[pos] != '\t')
    ++pos;
  return parse_scalar_token(s.substr(start, pos - start), line);
}

}  // namespace detail

inline TomlDoc parse_toml(const std::string& text) {
  TomlDoc doc;
  TomlTable* current = &doc.root;
  std::string current_name;  // for error messages

  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t eol = text.find('\n', pos);
    std::string raw = eol == std::string::npos ? text.substr(pos)
                                               : text.substr(pos, eol - pos);
    pos = eol == std::string::npos ? text.size() + 1 : eol + 1;
    ++line_no;

    std::string line = detail::trim_ws(detail::strip_comment(raw));
    if (line.empty()) continue;

    if (line.front() == '[') {
      bool is_array = line.size() >= 2 && line[1] == '[';
      std::string close = is_array ? "]]" : "]";
      if (line.size() < 2 * close.size() + 1 ||
          line.substr(line.size() - close.size()) != close)
        detail::toml_fail(line_no, "malformed table header '" + line + "'");
      std::string name = detail::trim_ws(line.substr(
          is_array ? 2 : 1, line.size() - 2 * (is_array ? 2 : 1)));
      if (!detail::bare_key_ok(name))
        detail::toml_fail(line_no, "invalid table name '" + name +
                                       "' (dotted/quoted names unsupported)");
      if (is_array) {
        if (doc.tables.count(name))
          detail::toml_fail(line_no, "'" + name +
                                         "' used as both [table] and [[table]]");
        doc.table_arrays[name].emplace_back();
        current = &doc.table_arrays[name].back();
      } else {
        if (doc.table_arrays.count(name))
          detail::toml_fail(line_no, "'" + name +
                                         "' used as both [table] and [[table]]");
        if (doc.tables.count(name))
          detail::toml_fail(line_no, "duplicate table [" + name + "]");
        current = &doc.tables[name];
      }
      current_name = name;
      continue;
    }

    std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      detail::toml_fail(line_no, "expected 'key = value', got '" + line + "'");
    std::string key = detail::trim_ws(line.substr(0, eq));
    if (!detail::bare_key_ok(key))
      detail::toml_fail(line_no, "invalid key '" + key + "'");
    if (current->values.count(key))
      detail::toml_fail(line_no, "duplicate key '" + key + "'" +
                                     (current_name.empty()
                                          ? ""
                                          : " in [" + current_name + "]"));
    std::string rhs = line.substr(eq + 1);
    std::size_t vpos = 0;
    TomlValue value = detail::parse_value(rhs, vpos, line_no);
    detail::skip_ws(rhs, vpos);
    if (vpos != rhs.size())
      detail::toml_fail(line_no,
                        "unexpected trailing text '" + rhs.substr(vpos) + "'");
    current->values.emplace(key, std::move(value));
  }
  return doc;
}

}  // namespace fuselet
