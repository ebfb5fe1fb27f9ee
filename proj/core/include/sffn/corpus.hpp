#pragma once

#include <cstdint>
#include <string>

namespace sffn {

// Deterministically generates approximately `bytes` of English-like prose:
// words drawn Zipf-distributed from an embedded vocabulary, grouped into
// sentences and paragraphs. Identical (bytes, seed) give identical output.
std::string generate_corpus(std::size_t bytes, std::uint64_t seed);

// Loads a byte-level training corpus. Throws std::runtime_error naming the
// path when the file is missing or empty.
std::string load_corpus(const std::string& path);

}  // namespace sffn
