#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "creole/corpus.hpp"

namespace creole {

// Per-language confidence, ordered like Identifier::languages().
struct ConfidenceMap {
  std::vector<std::string> languages;
  std::vector<double> scores;
  bool fallback = false;  // no scorable characters; scores are uniform

  double at(std::string_view language) const;
  std::size_t argmax() const;
};

struct GroupAssignment {
  std::uint64_t group_id = 0;
  std::vector<std::string> present_languages;
  GroupStrategy strategy = GroupStrategy::language;
};

// Character n-gram language identifier restricted to a declared inventory.
//
// Each language keeps counts for orders 1..n_max. A character's probability is
// the equal-weight mixture over orders of the additive-smoothed conditional
// P_n(c | previous n-1 chars) = (count + alpha) / (context total + alpha*|alphabet|),
// where the alphabet is every training character plus one out-of-alphabet
// symbol. Contexts never seen in training fall back to uniform. Log
// probabilities are floored at 1e-12, which keeps alpha = 0 finite.
class Identifier {
 public:
  static constexpr double kProbabilityFloor = 1e-12;

  // Throws std::invalid_argument for < 2 corpora, duplicate tags, corpora under
  // 50 sentences, n_max < 1 or negative alpha. Each corpus is tagged by its
  // first inventory entry.
  static Identifier train(const std::vector<Corpus>& labeled, int n_max = 4, double alpha = 0.01);

  const std::vector<std::string>& languages() const { return languages_; }
  int n_max() const { return n_max_; }
  double alpha() const { return alpha_; }
  std::size_t alphabet_size() const { return alphabet_.size() + 1; }

  ConfidenceMap identify(std::string_view sentence) const;
  ConfidenceMap identify(const Sentence& sentence) const { return identify(sentence.text); }

  // Mean per-character log-likelihood of `sentence` under each language.
  std::vector<double> mean_log_likelihoods(std::string_view sentence) const;

  // Conditional distribution over the alphabet (out-of-alphabet symbol last)
  // for one language and n-gram order, given a context of order-1 characters.
  std::vector<double> conditional(std::size_t language, int order,
                                  const std::u32string& context) const;

  void save(const std::filesystem::path& path) const;
  static Identifier load(const std::filesystem::path& path);

 private:
  struct ContextCounts {
    std::unordered_map<char32_t, std::uint64_t> next;
    std::uint64_t total = 0;
  };
  // Per language, per order (index order-1): context -> following-char counts.
  using OrderTable = std::unordered_map<std::u32string, ContextCounts>;

  double char_probability(std::size_t language, const std::u32string& padded,
                          std::size_t pos) const;
  double order_probability(std::size_t language, int order, const std::u32string& context,
                           char32_t c) const;
  char32_t canonical(char32_t c) const;
  void add_counts(std::size_t language, const std::u32string& normalized);

  std::vector<std::string> languages_;
  int n_max_ = 4;
  double alpha_ = 0.01;
  std::vector<char32_t> alphabet_;  // sorted
  std::vector<std::vector<OrderTable>> tables_;
};

// Lowercases, maps every run of non-letters to one space and trims.
std::u32string normalize_for_identification(std::string_view sentence);

// present = {l : conf[l] >= threshold}; group_id = sum of 2^i over present indices.
GroupAssignment assign_group(const ConfidenceMap& conf, double threshold);

struct GroupingOptions {
  GroupStrategy strategy = GroupStrategy::one;
  std::size_t group_count = 4;     // random strategy only
  double threshold = 0.001;        // language strategy on creole-only data
  std::uint64_t seed = 0;
};

// Assigns a group to every sentence and relabels the used groups densely to
// 0..G-1 in ascending raw-key order. For the language strategy, corpora with
// more than one language in their inventory group by source language; a
// single-language corpus is grouped by identified language collections and
// requires `identifier`.
GroupedDataset annotate_groups(const Corpus& dataset, const Identifier* identifier,
                               const GroupingOptions& options);

// Dense relabeling of raw keys: returns (dense ids, dense -> raw key).
std::pair<std::vector<int>, std::vector<std::uint64_t>> dense_relabel(
    const std::vector<std::uint64_t>& raw_keys);

struct HistogramRow {
  std::string language;
  double bin_lo = 0;
  double bin_hi = 0;
  std::size_t count = 0;
};

struct LanguageDistribution {
  static constexpr std::size_t kBins = 20;
  std::vector<HistogramRow> rows;               // language-major, kBins per language
  std::vector<std::size_t> present_counts;      // sentences with score >= threshold
  std::size_t fallback_sentences = 0;
};

LanguageDistribution language_distribution_report(const Corpus& dataset,
                                                  const Identifier& identifier,
                                                  double threshold);
// Columns: language, bin_lo, bin_hi, count.
void write_histogram_tsv(std::ostream& out, const LanguageDistribution& dist);

}  // namespace creole
