#pragma once

#include <string>

namespace sffn {

// Writes content to path atomically: a sibling temp file is written, flushed,
// then renamed over the destination, so readers never observe partial output.
void atomic_write_file(const std::string& path, const std::string& content);

// Reads a whole file; throws std::runtime_error naming the path on failure.
std::string read_file(const std::string& path);

// Creates the directory (and parents) if needed.
void ensure_directory(const std::string& path);

}  // namespace sffn
