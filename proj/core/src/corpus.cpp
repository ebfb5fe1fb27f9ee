#include "sffn/corpus.hpp"

#include <array>
#include <cctype>
#include <stdexcept>

#include "sffn/io.hpp"
#include "sffn/rng.hpp"

namespace sffn {

namespace {

// Compact everyday vocabulary; rank order doubles as frequency order.
constexpr std::array<const char*, 160> kWords = {
    "the",     "of",      "and",     "to",      "in",      "a",
    "is",      "that",    "for",     "it",      "as",      "was",
    "with",    "be",      "by",      "on",      "not",     "he",
    "this",    "are",     "or",      "his",     "from",    "at",
    "which",   "but",     "have",    "an",      "had",     "they",
    "you",     "were",    "their",   "one",     "all",     "we",
    "can",     "her",     "has",     "there",   "been",    "if",
    "more",    "when",    "will",    "would",   "who",     "so",
    "no",      "she",     "other",   "its",     "may",     "these",
    "what",    "them",    "than",    "some",    "him",     "time",
    "into",    "only",    "could",   "new",     "two",     "our",
    "work",    "first",   "water",   "after",   "where",   "little",
    "through", "because", "most",    "before",  "between", "under",
    "again",   "house",   "world",   "every",   "great",   "while",
    "should",  "never",   "each",    "found",   "those",   "school",
    "thought", "light",   "years",   "small",   "night",   "still",
    "country", "earth",   "father",  "mother",  "plant",   "river",
    "always",  "music",   "stone",   "garden",  "window",  "winter",
    "summer",  "morning", "evening", "silver",  "yellow",  "answer",
    "letter",  "middle",  "simple",  "single",  "second",  "minute",
    "market",  "street",  "bridge",  "castle",  "forest",  "valley",
    "island",  "ocean",   "spring",  "autumn",  "shadow",  "branch",
    "flower",  "meadow",  "harbor",  "candle",  "silence", "journey",
    "village", "machine", "picture", "science", "history", "nature",
    "energy",  "measure", "balance", "pattern", "purpose", "moment",
    "memory",  "wonder",  "weather", "feather", "whisper", "lantern",
    "thunder", "distant", "ancient", "gentle",
};

}  // namespace

std::string generate_corpus(std::size_t bytes, std::uint64_t seed) {
  if (bytes == 0) return {};
  RngStream rng(seed, "corpus");
  // Zipf weights over word rank; cumulative table for inverse-CDF draws.
  std::array<double, kWords.size()> cdf{};
  double total = 0.0;
  for (size_t r = 0; r < kWords.size(); ++r) {
    total += 1.0 / (static_cast<double>(r) + 2.7);
    cdf[r] = total;
  }
  auto draw_word = [&]() -> const char* {
    const double u = rng.next_double() * total;
    size_t lo = 0, hi = kWords.size() - 1;
    while (lo < hi) {
      const size_t mid = (lo + hi) / 2;
      if (cdf[mid] < u) {
        lo = mid + 1;
      } else {
        hi = mid;
      }
    }
    return kWords[lo];
  };

  std::string out;
  out.reserve(bytes + 64);
  int sentences_in_paragraph = 0;
  while (out.size() < bytes) {
    const int words =
        4 + static_cast<int>(rng.uniform_below(15));  // 4..18 words
    const int comma_at =
        words >= 8 ? 3 + static_cast<int>(rng.uniform_below(
                             static_cast<std::uint64_t>(words - 5)))
                   : -1;
    for (int w = 0; w < words; ++w) {
      std::string word = draw_word();
      if (w == 0) word[0] = static_cast<char>(std::toupper(word[0]));
      out += word;
      if (w == comma_at) out += ',';
      out += w + 1 == words ? "" : " ";
    }
    out += rng.uniform_below(12) == 0 ? "?" : ".";
    ++sentences_in_paragraph;
    if (sentences_in_paragraph >= 4 &&
        rng.uniform_below(3) == 0) {
      out += "\n\n";
      sentences_in_paragraph = 0;
    } else {
      out += ' ';
    }
  }
  out.resize(bytes);
  return out;
}

std::string load_corpus(const std::string& path) {
  std::string content;
  try {
    content = read_file(path);
  } catch (const std::exception&) {
    throw std::runtime_error("corpus file not found or unreadable: " + path);
  }
  if (content.empty()) {
    throw std::runtime_error("corpus file is empty: " + path);
  }
  return content;
}

}  // namespace sffn
