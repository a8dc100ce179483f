#include "msclip/corpus_metrics.hpp"

#include <algorithm>
#include <set>
#include <unordered_set>

#include "msclip/errors.hpp"
#include "msclip/rng.hpp"
#include "msclip/tokenizer.hpp"

namespace msclip {

double ngram_diversity(std::string_view caption,
                       const std::vector<int>& n_values) {
  const auto tokens = normalize_tokens(caption);
  if (tokens.empty()) throw EmptyCaptionError();
  if (n_values.empty()) throw InvalidConfigError("no n-gram orders given");

  double sum = 0.0;
  int used = 0;
  for (int n : n_values) {
    if (n < 1) throw InvalidConfigError("n-gram order must be positive");
    if (tokens.size() < static_cast<std::size_t>(n)) continue;
    const std::size_t total = tokens.size() - static_cast<std::size_t>(n) + 1;
    std::set<std::string> distinct;
    for (std::size_t i = 0; i < total; ++i) {
      std::string key;
      for (std::size_t k = 0; k < static_cast<std::size_t>(n); ++k) {
        if (k > 0) key.push_back(' ');
        key += tokens[i + k];
      }
      distinct.insert(std::move(key));
    }
    sum += static_cast<double>(distinct.size()) / static_cast<double>(total);
    ++used;
  }
  if (used == 0) return 1.0;  // every order longer than the caption
  return sum / static_cast<double>(used);
}

namespace {

double jaccard(const std::set<std::string>& a, const std::set<std::string>& b) {
  if (a.empty() && b.empty()) return 1.0;
  std::size_t inter = 0;
  for (const auto& t : a) inter += b.count(t);
  const std::size_t uni = a.size() + b.size() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace

double pairwise_similarity(const std::vector<std::string>& corpus,
                           std::size_t sample_pairs, std::uint64_t seed) {
  if (corpus.size() < 2) {
    throw CorpusTooSmallError("pairwise similarity needs 2 captions, got " +
                              std::to_string(corpus.size()));
  }
  std::vector<std::set<std::string>> sets;
  sets.reserve(corpus.size());
  for (const auto& text : corpus) {
    const auto toks = normalize_tokens(text);
    sets.emplace_back(toks.begin(), toks.end());
  }

  const std::size_t n = corpus.size();
  const std::size_t all_pairs = n * (n - 1) / 2;
  double sum = 0.0;
  std::size_t used = 0;
  if (sample_pairs == 0 || all_pairs <= sample_pairs) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        sum += jaccard(sets[i], sets[j]);
        ++used;
      }
    }
  } else {
    Rng rng(stream_key(seed, "pairwise"));
    for (std::size_t s = 0; s < sample_pairs; ++s) {
      std::size_t i = rng.bounded(n);
      std::size_t j = rng.bounded(n - 1);
      if (j >= i) ++j;  // uniform unordered pair, i != j
      sum += jaccard(sets[i], sets[j]);
      ++used;
    }
  }
  return sum / static_cast<double>(used);
}

namespace {

std::string stem(const std::string& w) {
  const auto ends_with = [&](std::string_view suf) {
    return w.size() > suf.size() + 1 &&
           w.compare(w.size() - suf.size(), suf.size(), suf) == 0;
  };
  if (ends_with("ing")) return w.substr(0, w.size() - 3);
  if (ends_with("ed")) return w.substr(0, w.size() - 2);
  if (ends_with("es")) return w.substr(0, w.size() - 2);
  if (ends_with("s")) return w.substr(0, w.size() - 1);
  return w;
}

}  // namespace

double meteor_simplified(std::string_view candidate,
                         std::string_view reference) {
  const auto cand = normalize_tokens(candidate);
  const auto ref = normalize_tokens(reference);
  if (cand.empty() || ref.empty()) throw EmptyTextError();

  // match[i] = index into ref, or -1
  std::vector<int> match(cand.size(), -1);
  std::vector<bool> ref_used(ref.size(), false);

  // Exact pass, then stem pass over the leftovers; both greedy
  // left-to-right, always taking the first free reference slot.
  for (std::size_t i = 0; i < cand.size(); ++i) {
    for (std::size_t j = 0; j < ref.size(); ++j) {
      if (!ref_used[j] && cand[i] == ref[j]) {
        match[i] = static_cast<int>(j);
        ref_used[j] = true;
        break;
      }
    }
  }
  for (std::size_t i = 0; i < cand.size(); ++i) {
    if (match[i] >= 0) continue;
    const std::string cs = stem(cand[i]);
    for (std::size_t j = 0; j < ref.size(); ++j) {
      if (!ref_used[j] && cs == stem(ref[j])) {
        match[i] = static_cast<int>(j);
        ref_used[j] = true;
        break;
      }
    }
  }

  std::size_t m = 0;
  for (int mi : match) m += mi >= 0;
  if (m == 0) return 0.0;

  // Chunks: runs of matches contiguous in both strings.
  std::size_t chunks = 0;
  int prev_i = -2;
  int prev_j = -2;
  for (std::size_t i = 0; i < cand.size(); ++i) {
    if (match[i] < 0) continue;
    if (static_cast<int>(i) != prev_i + 1 || match[i] != prev_j + 1) ++chunks;
    prev_i = static_cast<int>(i);
    prev_j = match[i];
  }

  const double md = static_cast<double>(m);
  const double precision = md / static_cast<double>(cand.size());
  const double recall = md / static_cast<double>(ref.size());
  const double fmean =
      10.0 * precision * recall / (recall + 9.0 * precision);
  const double frag = static_cast<double>(chunks) / md;
  const double penalty = 0.5 * frag * frag * frag;
  return fmean * (1.0 - penalty);
}

const std::vector<std::string>& stop_words() {
  static const std::vector<std::string> words = {
      "a",    "an",    "the",   "and",  "or",    "but",  "if",    "of",
      "in",   "on",    "at",    "to",   "from",  "by",   "with",  "for",
      "as",   "is",    "are",   "was",  "were",  "be",   "been",  "being",
      "it",   "its",   "this",  "that", "these", "those", "there", "here",
      "he",   "she",   "they",  "them", "his",   "her",  "their", "we",
      "you",  "i",     "not",   "no",   "so",    "than", "then",  "over",
      "under", "into"};
  return words;
}

std::vector<std::pair<std::string, std::size_t>> word_frequency(
    const std::vector<std::string>& corpus, std::size_t top_k) {
  if (corpus.empty()) throw EmptyCorpusError();
  static const std::unordered_set<std::string> stop(stop_words().begin(),
                                                    stop_words().end());
  auto counts = count_tokens(corpus);  // already sorted by (count desc, lex)
  std::vector<std::pair<std::string, std::size_t>> out;
  for (auto& [tok, count] : counts) {
    if (stop.count(tok)) continue;
    out.emplace_back(tok, count);
    if (out.size() == top_k) break;
  }
  return out;
}

std::string question_type(std::string_view question) {
  static const std::set<std::string> kinds = {"what", "how",   "are",
                                              "is",   "where", "which",
                                              "does", "do",    "can"};
  const auto toks = normalize_tokens(question);
  if (toks.empty()) return "other";
  return kinds.count(toks.front()) ? toks.front() : "other";
}

CorpusStats compute_corpus_stats(const std::vector<std::string>& captions,
                                 const std::vector<std::string>& questions,
                                 std::size_t top_k, std::size_t sample_pairs,
                                 std::uint64_t seed) {
  if (captions.empty()) throw EmptyCorpusError();
  CorpusStats stats;
  stats.caption_count = captions.size();

  const std::vector<int> orders = {1, 2, 3};
  for (int n : orders) {
    double sum = 0.0;
    std::size_t used = 0;
    for (const auto& caption : captions) {
      const auto tokens = normalize_tokens(caption);
      if (tokens.size() < static_cast<std::size_t>(n)) continue;
      sum += ngram_diversity(caption, {n});
      ++used;
    }
    stats.mean_diversity_per_n[n] =
        used == 0 ? 0.0 : sum / static_cast<double>(used);
  }
  {
    double sum = 0.0;
    for (const auto& caption : captions) sum += ngram_diversity(caption);
    stats.mean_diversity = sum / static_cast<double>(captions.size());
  }
  stats.mean_pairwise_similarity =
      captions.size() < 2 ? 1.0
                          : pairwise_similarity(captions, sample_pairs, seed);
  stats.top_words = word_frequency(captions, top_k);

  for (const auto& kind :
       {"what", "how", "are", "is", "where", "which", "does", "do", "can",
        "other"}) {
    stats.question_types[kind] = 0;
  }
  for (const auto& q : questions) {
    ++stats.question_types[question_type(q)];
    ++stats.question_count;
  }
  return stats;
}

}  // namespace msclip
