#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "creole/corpus.hpp"

namespace creole::synthetic {

// A toy language: a fixed lexicon over its own letter inventory, with
// Zipf-distributed word frequencies.
struct Language {
  std::string tag;
  std::vector<std::string> lexicon;
  std::vector<double> weights;  // unnormalized Zipf weights, one per word
};

// Builds `lexicon_size` distinct words of 2..7 letters drawn from `letters`
// (a UTF-8 string; each code point is one letter).
Language make_language(std::string tag, const std::string& letters, std::size_t lexicon_size,
                       std::uint64_t seed);

// Wraps an explicit word list with Zipf weights in list order.
Language from_words(std::string tag, std::vector<std::string> words);

// Sentences of min_len..max_len words sampled from the language.
std::vector<std::string> sentences(const Language& lang, std::size_t count, std::size_t min_len,
                                   std::size_t max_len, std::uint64_t seed);

// A contact language: each word slot draws from one of `sources` with the given
// mixing proportions (normalized internally).
std::vector<std::string> mixed_sentences(const std::vector<Language>& sources,
                                         const std::vector<double>& proportions,
                                         std::size_t count, std::size_t min_len,
                                         std::size_t max_len, std::uint64_t seed);

Corpus make_corpus(const std::string& name, const std::string& tag,
                   const std::vector<std::string>& lines);

// Letter inventories with no shared code points, for identification tests.
const std::vector<std::string>& disjoint_alphabets();

}  // namespace creole::synthetic
