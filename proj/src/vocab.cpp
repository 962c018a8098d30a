#include "creole/vocab.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <stdexcept>

#include "creole/error.hpp"
#include "creole/text.hpp"

namespace creole {

namespace {
const std::vector<std::string> kReservedTokens = {"[PAD]", "[UNK]", "[MASK]"};
}

Vocab::Vocab() : Vocab(kReservedTokens) {}

Vocab::Vocab(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  if (tokens_.size() < kReserved ||
      !std::equal(kReservedTokens.begin(), kReservedTokens.end(), tokens_.begin()))
    throw std::invalid_argument("vocabulary must start with [PAD] [UNK] [MASK]");
  for (std::size_t i = 0; i < tokens_.size(); ++i)
    if (!index_.emplace(tokens_[i], static_cast<int>(i)).second)
      throw std::invalid_argument("duplicate vocabulary token '" + tokens_[i] + "'");
}

Vocab Vocab::build(const Corpus& corpus, std::size_t max_size, std::size_t min_count) {
  if (max_size < 4) throw std::invalid_argument("max vocabulary size must be >= 4");
  std::map<std::string, std::size_t> counts;
  for (const auto& s : corpus.sentences())
    for (auto& t : surface_tokens(s.text)) ++counts[t];
  std::vector<std::pair<std::string, std::size_t>> kept;
  for (auto& [t, c] : counts)
    if (c >= std::max<std::size_t>(min_count, 1) && !std::count(kReservedTokens.begin(), kReservedTokens.end(), t))
      kept.emplace_back(t, c);
  std::stable_sort(kept.begin(), kept.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  if (kept.size() > max_size - kReserved) kept.resize(max_size - kReserved);
  std::vector<std::string> tokens = kReservedTokens;
  for (auto& [t, c] : kept) tokens.push_back(t);
  return Vocab(std::move(tokens));
}

int Vocab::id(std::string_view token) const {
  const auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

bool Vocab::contains(std::string_view token) const {
  const auto it = index_.find(std::string(token));
  return it != index_.end() && it->second >= kReserved;
}

void Vocab::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  for (const auto& t : tokens_) out << t << '\n';
  if (!out) throw Error("write failed for '" + path.string() + "'");
}

Vocab Vocab::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    tokens.push_back(line);
  }
  try {
    return Vocab(std::move(tokens));
  } catch (const std::invalid_argument& e) {
    throw FormatError(path.string(), 0, e.what());
  }
}

std::vector<std::string> surface_tokens(std::string_view sentence, std::size_t max_len) {
  auto tokens = text::split_whitespace(sentence);
  if (max_len && tokens.size() > max_len) tokens.resize(max_len);
  for (auto& t : tokens) t = text::to_lower(t);
  return tokens;
}

std::vector<int> tokenize(const Vocab& vocab, std::string_view sentence, std::size_t max_len) {
  std::vector<int> ids;
  for (const auto& t : surface_tokens(sentence, max_len)) ids.push_back(vocab.id(t));
  return ids;
}

}  // namespace creole
