#pragma once

#include <charconv>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "pneumo/types.hpp"

namespace pneumo::ini {

struct Entry {
  std::string key;
  std::string value;
  int line = 0;
};

struct Section {
  std::string name;  // full header text, e.g. "joint waist"
  int line = 0;
  std::vector<Entry> entries;

  const Entry* find(std::string_view key) const {
    for (const auto& e : entries)
      if (e.key == key) return &e;
    return nullptr;
  }
};

/// Minimal INI document that remembers line numbers so that validation
/// errors can point at the offending field.
struct Document {
  std::string file;
  std::vector<Section> sections;
};

inline std::string_view trim(std::string_view s) {
  const auto ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

inline Document parse(std::istream& in, std::string file = {}) {
  Document doc{std::move(file), {}};
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = raw;
    if (auto c = line.find_first_of("#;"); c != std::string_view::npos) line = line.substr(0, c);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(doc.file, line_no, "", "unterminated section header");
      auto name = trim(line.substr(1, line.size() - 2));
      if (name.empty()) throw ConfigError(doc.file, line_no, "", "empty section name");
      for (const auto& s : doc.sections)
        if (s.name == name) throw ConfigError(doc.file, line_no, "", "duplicate section [" + std::string(name) + "]");
      doc.sections.push_back(Section{std::string(name), line_no, {}});
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError(doc.file, line_no, "", "expected 'key = value'");
    if (doc.sections.empty()) throw ConfigError(doc.file, line_no, "", "key outside of any section");
    auto key = trim(line.substr(0, eq));
    auto value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(doc.file, line_no, "", "empty key");
    auto& sec = doc.sections.back();
    if (sec.find(key)) throw ConfigError(doc.file, line_no, std::string(key), "duplicate key");
    sec.entries.push_back(Entry{std::string(key), std::string(value), line_no});
  }
  return doc;
}

inline Document parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path, 0, "", "cannot open config file");
  return parse(in, path);
}

inline Document parse_string(const std::string& text, std::string file = "<string>") {
  std::istringstream in(text);
  return parse(in, std::move(file));
}

inline double to_double(const Document& doc, const Entry& e) {
  double out = 0.0;
  const auto* first = e.value.data();
  const auto* last = first + e.value.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  if (ec != std::errc{} || ptr != last)
    throw ConfigError(doc.file, e.line, e.key, "expected a number, got '" + e.value + "'");
  return out;
}

inline long to_long(const Document& doc, const Entry& e) {
  long out = 0;
  const auto* first = e.value.data();
  const auto* last = first + e.value.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  if (ec != std::errc{} || ptr != last)
    throw ConfigError(doc.file, e.line, e.key, "expected an integer, got '" + e.value + "'");
  return out;
}

inline std::vector<std::string> split_words(std::string_view s) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t' || s[i] == ',')) ++i;
    std::size_t j = i;
    while (j < s.size() && s[j] != ' ' && s[j] != '\t' && s[j] != ',') ++j;
    if (j > i) out.emplace_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

inline std::vector<double> to_doubles(const Document& doc, const Entry& e) {
  std::vector<double> out;
  for (const auto& w : split_words(e.value)) {
    Entry tmp{e.key, w, e.line};
    out.push_back(to_double(doc, tmp));
  }
  return out;
}

}  // namespace pneumo::ini
