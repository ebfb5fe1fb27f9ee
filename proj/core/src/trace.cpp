#include "sffn/trace.hpp"

#include <charconv>
#include <sstream>
#include <stdexcept>
#include <string>

#include "sffn/io.hpp"

namespace sffn {

namespace {

constexpr const char* kHeader = "layer,seq,pos,token_id,blocks";

[[noreturn]] void malformed(const std::string& path, size_t line,
                            const std::string& why) {
  throw std::runtime_error("malformed trace " + path + ":" +
                           std::to_string(line) + ": " + why);
}

int parse_int(std::string_view field, const std::string& path, size_t line) {
  int value = 0;
  const auto [ptr, ec] =
      std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc() || ptr != field.data() + field.size()) {
    malformed(path, line, "expected integer, got '" + std::string(field) + "'");
  }
  return value;
}

}  // namespace

void write_trace_csv(const std::string& path, const RoutingTrace& trace) {
  std::ostringstream out;
  if (trace.num_blocks > 0 && trace.block_size > 0) {
    out << "# geometry blocks=" << trace.num_blocks << " g="
        << trace.block_size << "\n";
  }
  out << kHeader << "\n";
  for (const auto& e : trace.events) {
    out << e.layer << ',' << e.seq << ',' << e.pos << ',' << e.token << ',';
    for (size_t i = 0; i < e.blocks.size(); ++i) {
      if (i > 0) out << '|';
      out << e.blocks[i];
    }
    out << '\n';
  }
  atomic_write_file(path, out.str());
}

RoutingTrace read_trace_csv(const std::string& path) {
  const std::string content = read_file(path);
  RoutingTrace trace;
  std::istringstream in(content);
  std::string line;
  size_t lineno = 0;
  bool saw_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (line[0] == '#') {
      // Optional geometry annotation.
      std::istringstream meta(line.substr(1));
      std::string word;
      while (meta >> word) {
        if (word.rfind("blocks=", 0) == 0) {
          trace.num_blocks = parse_int(word.substr(7), path, lineno);
        } else if (word.rfind("g=", 0) == 0) {
          trace.block_size = parse_int(word.substr(2), path, lineno);
        }
      }
      continue;
    }
    if (!saw_header) {
      if (line != kHeader) {
        malformed(path, lineno,
                  "expected header '" + std::string(kHeader) + "'");
      }
      saw_header = true;
      continue;
    }
    RouteEvent e;
    size_t start = 0;
    std::string_view view(line);
    std::vector<std::string_view> fields;
    for (int f = 0; f < 4; ++f) {
      const size_t comma = view.find(',', start);
      if (comma == std::string_view::npos) {
        malformed(path, lineno, "expected 5 comma-separated fields");
      }
      fields.push_back(view.substr(start, comma - start));
      start = comma + 1;
    }
    const std::string_view blocks_field = view.substr(start);
    if (blocks_field.find(',') != std::string_view::npos) {
      malformed(path, lineno, "expected 5 comma-separated fields");
    }
    e.layer = parse_int(fields[0], path, lineno);
    e.seq = parse_int(fields[1], path, lineno);
    e.pos = parse_int(fields[2], path, lineno);
    e.token = parse_int(fields[3], path, lineno);
    if (blocks_field.empty()) {
      malformed(path, lineno, "empty block list");
    }
    size_t bstart = 0;
    while (true) {
      const size_t bar = blocks_field.find('|', bstart);
      const auto piece = bar == std::string_view::npos
                             ? blocks_field.substr(bstart)
                             : blocks_field.substr(bstart, bar - bstart);
      e.blocks.push_back(parse_int(piece, path, lineno));
      if (bar == std::string_view::npos) break;
      bstart = bar + 1;
    }
    for (size_t i = 1; i < e.blocks.size(); ++i) {
      if (e.blocks[i] <= e.blocks[i - 1]) {
        malformed(path, lineno, "block ids must be strictly ascending");
      }
    }
    trace.events.push_back(std::move(e));
  }
  if (!saw_header) {
    throw std::runtime_error("malformed trace " + path + ": missing header");
  }
  return trace;
}

}  // namespace sffn
