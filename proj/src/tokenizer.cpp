#include "msclip/tokenizer.hpp"

#include <algorithm>
#include <fstream>
#include <map>

#include "msclip/errors.hpp"

namespace msclip {

namespace {

// Minimal UTF-8 decoder; malformed bytes are treated as Latin-1 so odd
// input degrades instead of throwing.
std::vector<char32_t> decode_utf8(std::string_view s) {
  std::vector<char32_t> out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    const auto b0 = static_cast<unsigned char>(s[i]);
    char32_t cp = b0;
    std::size_t extra = 0;
    if (b0 >= 0xF0) {
      cp = b0 & 0x07u;
      extra = 3;
    } else if (b0 >= 0xE0) {
      cp = b0 & 0x0Fu;
      extra = 2;
    } else if (b0 >= 0xC0) {
      cp = b0 & 0x1Fu;
      extra = 1;
    }
    if (extra == 0) {
      out.push_back(cp);
      ++i;
      continue;
    }
    bool ok = i + extra < s.size();
    for (std::size_t k = 1; ok && k <= extra; ++k) {
      if ((static_cast<unsigned char>(s[i + k]) & 0xC0u) != 0x80u) ok = false;
    }
    if (ok) {
      for (std::size_t k = 1; k <= extra; ++k) {
        cp = (cp << 6) | (static_cast<unsigned char>(s[i + k]) & 0x3Fu);
      }
      out.push_back(cp);
      i += extra + 1;
    } else {
      out.push_back(b0);  // fallback: raw byte
      ++i;
    }
  }
  return out;
}

bool is_space_cp(char32_t c) {
  switch (c) {
    case 0x09: case 0x0A: case 0x0B: case 0x0C: case 0x0D:
    case 0x20: case 0x85: case 0xA0: case 0x1680:
    case 0x2028: case 0x2029: case 0x202F: case 0x205F: case 0x3000:
      return true;
    default:
      return c >= 0x2000 && c <= 0x200A;
  }
}

bool is_ascii_punct(char32_t c) {
  return (c >= 0x21 && c <= 0x2F) || (c >= 0x3A && c <= 0x40) ||
         (c >= 0x5B && c <= 0x60) || (c >= 0x7B && c <= 0x7E);
}

void append_utf8(std::string& out, char32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

}  // namespace

std::vector<std::string> normalize_tokens(std::string_view text) {
  const auto cps = decode_utf8(text);
  std::vector<std::string> tokens;
  std::size_t i = 0;
  while (i < cps.size()) {
    while (i < cps.size() && is_space_cp(cps[i])) ++i;
    std::size_t j = i;
    while (j < cps.size() && !is_space_cp(cps[j])) ++j;
    if (j > i) {
      std::size_t a = i;
      std::size_t b = j;
      while (a < b && is_ascii_punct(cps[a])) ++a;
      while (b > a && is_ascii_punct(cps[b - 1])) --b;
      if (b > a) {
        std::string tok;
        for (std::size_t k = a; k < b; ++k) {
          char32_t c = cps[k];
          if (c >= 'A' && c <= 'Z') c += 32;
          append_utf8(tok, c);
        }
        tokens.push_back(std::move(tok));
      }
    }
    i = j;
  }
  return tokens;
}

std::vector<std::pair<std::string, std::size_t>> count_tokens(
    const std::vector<std::string>& corpus) {
  std::map<std::string, std::size_t> counts;
  for (const auto& text : corpus) {
    for (auto& tok : normalize_tokens(text)) ++counts[tok];
  }
  std::vector<std::pair<std::string, std::size_t>> out(counts.begin(),
                                                       counts.end());
  // Frequency-descending; the map already fixed the lexicographic tie order
  // and stable_sort preserves it.
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return a.second > b.second;
  });
  return out;
}

Vocabulary build_vocab(const std::vector<std::string>& corpus,
                       std::size_t max_size) {
  if (corpus.empty()) throw EmptyCorpusError();
  if (max_size < 4) {
    throw InvalidConfigError("vocabulary needs at least the 4 special ids");
  }
  Vocabulary vocab;
  vocab.tokens = {"<pad>", "<bos>", "<eos>", "<unk>"};
  for (auto& [tok, count] : count_tokens(corpus)) {
    (void)count;
    if (vocab.tokens.size() >= max_size) break;
    vocab.tokens.push_back(tok);
  }
  for (std::size_t i = 0; i < vocab.tokens.size(); ++i) {
    vocab.ids[vocab.tokens[i]] = static_cast<int>(i);
  }
  return vocab;
}

std::vector<int> encode(std::string_view text, const Vocabulary& vocab,
                        std::size_t context_length) {
  if (context_length < 3) {
    throw InvalidConfigError("context_length must be at least 3");
  }
  auto words = normalize_tokens(text);
  const std::size_t keep = std::min(words.size(), context_length - 2);
  std::vector<int> ids;
  ids.reserve(context_length);
  ids.push_back(Vocabulary::kBos);
  for (std::size_t i = 0; i < keep; ++i) ids.push_back(vocab.id_of(words[i]));
  ids.push_back(Vocabulary::kEos);
  ids.resize(context_length, Vocabulary::kPad);
  return ids;
}

std::string decode(const std::vector<int>& ids, const Vocabulary& vocab) {
  std::string out;
  for (int id : ids) {
    if (id < 0 || id >= vocab.size()) {
      throw TokenOutOfRangeError(std::to_string(id));
    }
    if (id == Vocabulary::kPad || id == Vocabulary::kBos ||
        id == Vocabulary::kEos) {
      continue;
    }
    if (!out.empty()) out.push_back(' ');
    out += vocab.tokens[static_cast<std::size_t>(id)];
  }
  return out;
}

void write_vocab(const std::filesystem::path& path, const Vocabulary& vocab) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open for write: " + path.string());
  for (const auto& tok : vocab.tokens) os << tok << "\n";
  if (!os) throw IoError("write failed: " + path.string());
}

Vocabulary read_vocab(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open vocabulary: " + path.string());
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) tokens.push_back(line);
  }
  return vocab_from_tokens(std::move(tokens));
}

Vocabulary vocab_from_tokens(std::vector<std::string> tokens) {
  if (tokens.size() < 4 || tokens[0] != "<pad>" || tokens[1] != "<bos>" ||
      tokens[2] != "<eos>" || tokens[3] != "<unk>") {
    throw InvalidConfigError("vocabulary must start with the 4 special ids");
  }
  Vocabulary vocab;
  vocab.tokens = std::move(tokens);
  for (std::size_t i = 0; i < vocab.tokens.size(); ++i) {
    vocab.ids[vocab.tokens[i]] = static_cast<int>(i);
  }
  return vocab;
}

}  // namespace msclip
