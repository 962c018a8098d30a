#include "creole/synthetic.hpp"

#include <algorithm>
#include <random>
#include <set>
#include <stdexcept>

#include "creole/rng.hpp"
#include "creole/text.hpp"

namespace creole::synthetic {

namespace {

std::vector<double> zipf_weights(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) w[i] = 1.0 / static_cast<double>(i + 1);
  return w;
}

std::string sample_sentence(const Language& lang, std::discrete_distribution<std::size_t>& pick,
                            std::size_t words, Rng& rng) {
  std::string out;
  for (std::size_t k = 0; k < words; ++k) {
    if (k) out.push_back(' ');
    out += lang.lexicon[pick(rng)];
  }
  return out;
}

}  // namespace

Language make_language(std::string tag, const std::string& letters, std::size_t lexicon_size,
                       std::uint64_t seed) {
  const std::u32string alphabet = text::decode_utf8(letters);
  if (alphabet.size() < 2) throw std::invalid_argument("alphabet too small");
  Rng rng(seed);
  std::set<std::string> seen;
  std::vector<std::string> words;
  std::size_t attempts = 0;
  while (words.size() < lexicon_size) {
    if (++attempts > lexicon_size * 1000) throw std::invalid_argument("alphabet too small for lexicon");
    const std::size_t len = 2 + uniform_index(rng, 6);
    std::u32string w;
    for (std::size_t i = 0; i < len; ++i) w.push_back(alphabet[uniform_index(rng, alphabet.size())]);
    std::string word = text::encode_utf8(w);
    if (seen.insert(word).second) words.push_back(std::move(word));
  }
  return from_words(std::move(tag), std::move(words));
}

Language from_words(std::string tag, std::vector<std::string> words) {
  if (words.empty()) throw std::invalid_argument("empty lexicon");
  Language lang{std::move(tag), std::move(words), {}};
  lang.weights = zipf_weights(lang.lexicon.size());
  return lang;
}

std::vector<std::string> sentences(const Language& lang, std::size_t count, std::size_t min_len,
                                   std::size_t max_len, std::uint64_t seed) {
  if (min_len == 0 || max_len < min_len) throw std::invalid_argument("bad sentence length range");
  Rng rng(seed);
  std::discrete_distribution<std::size_t> pick(lang.weights.begin(), lang.weights.end());
  std::vector<std::string> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t len = min_len + uniform_index(rng, max_len - min_len + 1);
    out.push_back(sample_sentence(lang, pick, len, rng));
  }
  return out;
}

std::vector<std::string> mixed_sentences(const std::vector<Language>& sources,
                                         const std::vector<double>& proportions,
                                         std::size_t count, std::size_t min_len,
                                         std::size_t max_len, std::uint64_t seed) {
  if (sources.empty() || sources.size() != proportions.size())
    throw std::invalid_argument("sources and proportions must align");
  if (min_len == 0 || max_len < min_len) throw std::invalid_argument("bad sentence length range");
  Rng rng(seed);
  std::discrete_distribution<std::size_t> source(proportions.begin(), proportions.end());
  std::vector<std::discrete_distribution<std::size_t>> picks;
  for (const auto& l : sources) picks.emplace_back(l.weights.begin(), l.weights.end());
  std::vector<std::string> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t len = min_len + uniform_index(rng, max_len - min_len + 1);
    std::string s;
    for (std::size_t k = 0; k < len; ++k) {
      const std::size_t src = source(rng);
      if (k) s.push_back(' ');
      s += sources[src].lexicon[picks[src](rng)];
    }
    out.push_back(std::move(s));
  }
  return out;
}

Corpus make_corpus(const std::string& name, const std::string& tag,
                   const std::vector<std::string>& lines) {
  std::vector<Sentence> s;
  s.reserve(lines.size());
  for (const auto& l : lines) s.push_back({l, tag, s.size()});
  return Corpus(name, {tag}, std::move(s));
}

const std::vector<std::string>& disjoint_alphabets() {
  static const std::vector<std::string> kAlphabets = {
      "abcdefg", "hijklmn", "opqrstu", "vwxyzàé", "èìòùâêî", "ôûäëïöü",
  };
  return kAlphabets;
}

}  // namespace creole::synthetic
