#pragma once

// Plain-text `key = value` files. Lines starting with '#' are comments and
// `[name]` opens a section. Keys keep file order.

#include <fstream>
#include <istream>
#include <string>
#include <utility>
#include <vector>

#include "popx/common.hpp"

namespace popx::config {

struct Entry {
  std::string key;
  std::string value;
  std::size_t line = 0;
};

struct Section {
  std::string name;  // empty for entries before the first header
  std::vector<Entry> entries;

  const Entry* find(std::string_view key) const {
    for (const auto& e : entries)
      if (e.key == key) return &e;
    return nullptr;
  }
  std::string get(std::string_view key, std::string fallback) const {
    const Entry* e = find(key);
    return e ? e->value : std::move(fallback);
  }
};

inline std::vector<Section> parse(std::istream& in) {
  std::vector<Section> sections(1);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    if (t.front() == '[') {
      if (t.back() != ']') throw Error("config line " + std::to_string(line_no) + ": unterminated section header");
      sections.push_back(Section{trim(std::string_view(t).substr(1, t.size() - 2)), {}});
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw Error("config line " + std::to_string(line_no) + ": expected 'key = value'");
    Entry e{trim(std::string_view(t).substr(0, eq)), trim(std::string_view(t).substr(eq + 1)), line_no};
    if (e.key.empty()) throw Error("config line " + std::to_string(line_no) + ": empty key");
    sections.back().entries.push_back(std::move(e));
  }
  return sections;
}

inline std::vector<Section> parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config file '" + path + "'");
  return parse(in);
}

}  // namespace popx::config
