#pragma once

// RFC 4180 reader/writer. Comma delimiter, double-quote escaping, LF or CRLF
// record separators on input, LF on output.

#include <istream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "popx/common.hpp"

namespace popx::csv {

using Record = std::vector<std::string>;

struct Table {
  Record header;
  std::vector<Record> rows;
  std::vector<std::size_t> line_numbers;  // 1-based physical line where each row starts
};

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  /// Reads the next record. Returns false at end of input.
  bool next(Record& out) {
    out.clear();
    int c = in_.get();
    if (c == std::char_traits<char>::eof()) return false;
    record_line_ = line_;
    std::string field;
    bool quoted = false;
    bool after_quote = false;
    for (;; c = in_.get()) {
      if (c == std::char_traits<char>::eof()) {
        if (quoted) throw Error("csv: unterminated quoted field starting on line " +
                                std::to_string(record_line_));
        out.push_back(std::move(field));
        return true;
      }
      const char ch = static_cast<char>(c);
      if (quoted) {
        if (ch == '"') {
          if (in_.peek() == '"') {
            in_.get();
            field.push_back('"');
          } else {
            quoted = false;
            after_quote = true;
          }
        } else {
          if (ch == '\n') ++line_;
          field.push_back(ch);
        }
        continue;
      }
      if (ch == ',') {
        out.push_back(std::move(field));
        field.clear();
        after_quote = false;
      } else if (ch == '\n' || ch == '\r') {
        if (ch == '\r' && in_.peek() == '\n') in_.get();
        ++line_;
        out.push_back(std::move(field));
        return true;
      } else if (ch == '"') {
        if (!field.empty() || after_quote)
          throw Error("csv: stray quote on line " + std::to_string(line_));
        quoted = true;
      } else {
        if (after_quote)
          throw Error("csv: characters after closing quote on line " + std::to_string(line_));
        field.push_back(ch);
      }
    }
  }

  std::size_t record_line() const { return record_line_; }

 private:
  std::istream& in_;
  std::size_t line_ = 1;
  std::size_t record_line_ = 1;
};

/// Reads a whole file with a header. Blank lines are skipped; ragged rows are errors.
inline Table read_table(std::istream& in) {
  Reader reader(in);
  Table t;
  Record rec;
  if (!reader.next(rec)) throw Error("csv: empty input, header row expected");
  if (!rec.empty() && rec[0].size() >= 3 && rec[0].compare(0, 3, "\xEF\xBB\xBF") == 0)
    rec[0].erase(0, 3);
  t.header = rec;
  while (reader.next(rec)) {
    if (rec.size() == 1 && rec[0].empty()) continue;
    if (rec.size() != t.header.size())
      throw Error("csv: line " + std::to_string(reader.record_line()) + " has " +
                  std::to_string(rec.size()) + " fields, header has " +
                  std::to_string(t.header.size()));
    t.rows.push_back(rec);
    t.line_numbers.push_back(reader.record_line());
  }
  return t;
}

inline bool needs_quoting(std::string_view field) {
  return field.find_first_of(",\"\r\n") != std::string_view::npos;
}

inline std::string escape(std::string_view field) {
  if (!needs_quoting(field)) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

inline void write_record(std::ostream& out, const Record& rec) {
  for (std::size_t i = 0; i < rec.size(); ++i) {
    if (i) out << ',';
    out << escape(rec[i]);
  }
  out << '\n';
}

}  // namespace popx::csv
