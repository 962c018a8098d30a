#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "creole/corpus.hpp"

namespace creole {

// Word-level vocabulary. Ids 0..2 are reserved and never assigned to words.
class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kMask = 2;
  static constexpr int kReserved = 3;

  Vocab();
  // Tokens are listed in id order; the first three must be the reserved ones.
  explicit Vocab(std::vector<std::string> tokens);

  // Lowercased whitespace tokens with count >= min_count, by descending count
  // then lexicographically, truncated to max_size - 3 entries.
  static Vocab build(const Corpus& corpus, std::size_t max_size, std::size_t min_count);

  std::size_t size() const { return tokens_.size(); }
  int id(std::string_view token) const;  // kUnk when absent; expects lowercase input
  bool contains(std::string_view token) const;
  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  void save(const std::filesystem::path& path) const;
  static Vocab load(const std::filesystem::path& path);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

// Lowercased whitespace tokens of a sentence, truncated to max_len (0 = no limit).
std::vector<std::string> surface_tokens(std::string_view sentence, std::size_t max_len = 0);

// Maps through the vocabulary with UNK fallback, truncating to max_len.
std::vector<int> tokenize(const Vocab& vocab, std::string_view sentence, std::size_t max_len);

}  // namespace creole
