#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace msclip {

// Word-level vocabulary with four reserved ids. Token order after the
// specials is frequency-descending, ties broken lexicographically.
struct Vocabulary {
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;

  std::vector<std::string> tokens;  // id -> token, specials first
  std::unordered_map<std::string, int> ids;

  int size() const { return static_cast<int>(tokens.size()); }

  // UNK for out-of-vocabulary words.
  int id_of(const std::string& token) const {
    auto it = ids.find(token);
    return it == ids.end() ? kUnk : it->second;
  }
};

// Lowercase, split on Unicode whitespace, strip leading and trailing
// punctuation from each word (interior hyphens survive). Empty results are
// dropped.
std::vector<std::string> normalize_tokens(std::string_view text);

// Corpus -> vocabulary, capped at max_size total ids (specials included).
std::vector<std::pair<std::string, std::size_t>> count_tokens(
    const std::vector<std::string>& corpus);
Vocabulary build_vocab(const std::vector<std::string>& corpus,
                       std::size_t max_size);

// [BOS, tokens..., EOS, PAD...] of exactly context_length ids. Texts longer
// than context_length - 2 words are truncated, EOS always present.
std::vector<int> encode(std::string_view text, const Vocabulary& vocab,
                        std::size_t context_length = 77);

// Drops specials, joins with single spaces.
std::string decode(const std::vector<int>& ids, const Vocabulary& vocab);

// One token per line, in id order.
void write_vocab(const std::filesystem::path& path, const Vocabulary& vocab);
Vocabulary read_vocab(const std::filesystem::path& path);
Vocabulary vocab_from_tokens(std::vector<std::string> tokens);

}  // namespace msclip
