#pragma once

#include <cstdio>
#include <istream>
#include <string>
#include <vector>

namespace urbanflow::csv {

// Round-trippable, deterministic double formatting.
inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

inline void split(const std::string& line, std::vector<std::string>& out) {
  out.clear();
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(',', start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      return;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

// Minimal CSV reader; no quoting (none of the artifact formats need it).
class Reader {
 public:
  explicit Reader(std::istream& in, bool has_header) : in_(in) {
    if (has_header) std::getline(in_, line_);
  }

  bool next(std::vector<std::string>& row) {
    while (std::getline(in_, line_)) {
      if (line_.empty()) continue;
      if (!line_.empty() && line_.back() == '\r') line_.pop_back();
      split(line_, row);
      return true;
    }
    return false;
  }

 private:
  std::istream& in_;
  std::string line_;
};

}  // namespace urbanflow::csv
