#include "sffn/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <sstream>
#include <stdexcept>

#include "sffn/io.hpp"

namespace sffn {

namespace {

constexpr const char* kMagic = "SFFN1";

std::uint64_t byteswap64(std::uint64_t v) {
  std::uint64_t out = 0;
  for (int i = 0; i < 8; ++i) {
    out = (out << 8) | ((v >> (8 * i)) & 0xffULL);
  }
  return out;
}

void append_le_doubles(std::string& out, const std::vector<double>& values) {
  for (const double d : values) {
    std::uint64_t bits;
    std::memcpy(&bits, &d, sizeof(bits));
    if constexpr (std::endian::native == std::endian::big) {
      bits = byteswap64(bits);
    }
    char raw[8];
    std::memcpy(raw, &bits, sizeof(raw));
    out.append(raw, sizeof(raw));
  }
}

}  // namespace

void save_checkpoint(const std::string& path,
                     const std::vector<NamedTensor>& tensors) {
  std::string out;
  out += kMagic;
  out += '\n';
  for (const auto& t : tensors) {
    if (t.name.empty() ||
        t.name.find_first_of(" \t\n") != std::string::npos) {
      throw std::invalid_argument("save_checkpoint: bad tensor name '" +
                                  t.name + "'");
    }
    out += "tensor " + t.name + " f64 " + std::to_string(t.value.rows) + " " +
           std::to_string(t.value.cols) + "\n";
  }
  out += "data\n";
  for (const auto& t : tensors) append_le_doubles(out, t.value.data);
  atomic_write_file(path, out);
}

std::vector<NamedTensor> load_checkpoint(const std::string& path) {
  const std::string content = read_file(path);
  auto fail = [&](const std::string& why) -> void {
    throw std::runtime_error("bad checkpoint " + path + ": " + why);
  };
  size_t cursor = 0;
  auto next_line = [&]() -> std::string {
    const size_t nl = content.find('\n', cursor);
    if (nl == std::string::npos) fail("truncated header");
    std::string line = content.substr(cursor, nl - cursor);
    cursor = nl + 1;
    return line;
  };
  if (next_line() != kMagic) fail("magic mismatch (expected SFFN1)");
  std::vector<NamedTensor> tensors;
  while (true) {
    const std::string line = next_line();
    if (line == "data") break;
    std::istringstream fields(line);
    std::string keyword, name, dtype;
    long rows = -1, cols = -1;
    fields >> keyword >> name >> dtype >> rows >> cols;
    if (!fields || keyword != "tensor" || dtype != "f64" || rows < 0 ||
        cols < 0) {
      fail("malformed header line '" + line + "'");
    }
    NamedTensor t;
    t.name = name;
    t.value = Matrix(static_cast<int>(rows), static_cast<int>(cols));
    tensors.push_back(std::move(t));
  }
  for (auto& t : tensors) {
    const size_t bytes = t.value.data.size() * sizeof(double);
    if (cursor + bytes > content.size()) fail("truncated tensor data");
    for (size_t i = 0; i < t.value.data.size(); ++i) {
      std::uint64_t bits;
      std::memcpy(&bits, content.data() + cursor + i * 8, 8);
      if constexpr (std::endian::native == std::endian::big) {
        bits = byteswap64(bits);
      }
      double d;
      std::memcpy(&d, &bits, sizeof(d));
      t.value.data[i] = d;
    }
    cursor += bytes;
  }
  if (cursor != content.size()) fail("trailing bytes after tensor data");
  return tensors;
}

}  // namespace sffn
