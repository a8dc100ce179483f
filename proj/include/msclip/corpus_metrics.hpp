#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace msclip {

// Distinct/total n-gram ratio per n, averaged over every n that yields at
// least one n-gram. Tokens come from the shared text normalization.
double ngram_diversity(std::string_view caption,
                       const std::vector<int>& n_values = {1, 2, 3});

// Mean Jaccard similarity between token sets of caption pairs. All unordered
// pairs when there are at most sample_pairs of them, otherwise sample_pairs
// seeded uniform draws.
double pairwise_similarity(const std::vector<std::string>& corpus,
                           std::size_t sample_pairs, std::uint64_t seed);

// Unigram matcher score: exact pass then suffix-stem pass (s/es/ed/ing),
// both greedy left-to-right; harmonic mean weighted toward recall with a
// fragmentation penalty.
double meteor_simplified(std::string_view candidate,
                         std::string_view reference);

// The 50 stop words excluded from word_frequency().
const std::vector<std::string>& stop_words();

// Non-stop-word counts, frequency-descending, ties lexicographic.
std::vector<std::pair<std::string, std::size_t>> word_frequency(
    const std::vector<std::string>& corpus, std::size_t top_k);

// First normalized word if it is one of the nine interrogatives, else
// "other".
std::string question_type(std::string_view question);

struct CorpusStats {
  std::size_t caption_count = 0;
  std::map<int, double> mean_diversity_per_n;
  double mean_diversity = 0.0;
  double mean_pairwise_similarity = 0.0;
  std::vector<std::pair<std::string, std::size_t>> top_words;
  std::map<std::string, std::size_t> question_types;
  std::size_t question_count = 0;
};

CorpusStats compute_corpus_stats(
    const std::vector<std::string>& captions,
    const std::vector<std::string>& questions, std::size_t top_k,
    std::size_t sample_pairs, std::uint64_t seed);

}  // namespace msclip
