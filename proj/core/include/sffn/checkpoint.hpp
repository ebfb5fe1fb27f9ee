#pragma once

#include <string>
#include <vector>

#include "sffn/matrix.hpp"

namespace sffn {

struct NamedTensor {
  std::string name;
  Matrix value;
};

// Checkpoint format, versioned by the leading magic line:
//   SFFN1\n
//   tensor <name> f64 <rows> <cols>\n     (one per tensor, header order)
//   data\n
//   <raw little-endian 64-bit floats, row-major, concatenated in order>
// Names must be non-empty and free of whitespace. Written atomically.
void save_checkpoint(const std::string& path,
                     const std::vector<NamedTensor>& tensors);

// Throws std::runtime_error naming the path on bad magic, a malformed
// header, or truncated data.
std::vector<NamedTensor> load_checkpoint(const std::string& path);

}  // namespace sffn
