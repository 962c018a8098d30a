#include "creole/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <unordered_set>

#include "creole/error.hpp"
#include "creole/rng.hpp"
#include "creole/text.hpp"

namespace creole {

namespace fs = std::filesystem;

bool is_creole_tag(std::string_view tag) { return tag.starts_with(kCreolePrefix); }

Corpus::Corpus(std::string name, std::vector<std::string> language_inventory,
               std::vector<Sentence> sentences)
    : name_(std::move(name)),
      inventory_(std::move(language_inventory)),
      sentences_(std::move(sentences)) {
  if (sentences_.empty()) throw std::invalid_argument("corpus '" + name_ + "' is empty");
  std::unordered_set<std::size_t> ids;
  for (const auto& s : sentences_) {
    if (text::trim(s.text).empty())
      throw std::invalid_argument("corpus '" + name_ + "': blank sentence " + std::to_string(s.id));
    if (!ids.insert(s.id).second)
      throw std::invalid_argument("corpus '" + name_ + "': duplicate id " + std::to_string(s.id));
    if (!language_index(s.source_language))
      throw std::invalid_argument("corpus '" + name_ + "': language '" + s.source_language +
                                  "' not in inventory");
  }
}

bool Corpus::has_creole() const {
  return std::any_of(sentences_.begin(), sentences_.end(),
                     [](const Sentence& s) { return is_creole_tag(s.source_language); });
}

std::optional<std::size_t> Corpus::language_index(std::string_view tag) const {
  for (std::size_t i = 0; i < inventory_.size(); ++i)
    if (inventory_[i] == tag) return i;
  return std::nullopt;
}

void MixPolicy::validate() const {
  if (!(dev_ratio > 0.0 && dev_ratio < 1.0))
    throw std::invalid_argument("dev_ratio must lie in (0, 1)");
  if (!(scarce_fraction > 0.0 && scarce_fraction <= 1.0))
    throw std::invalid_argument("scarce_fraction must lie in (0, 1]");
  if (target_per_language && *target_per_language == 0)
    throw std::invalid_argument("target_per_language must be positive");
}

bool DictionarySet::contains(std::string_view word) const {
  return words.count(text::to_lower(word)) > 0;
}

std::string to_string(TagScheme scheme) { return scheme == TagScheme::bio ? "bio" : "upos"; }

TagScheme parse_tag_scheme(std::string_view name) {
  const std::string n = text::to_lower(name);
  if (n == "upos") return TagScheme::upos;
  if (n == "bio" || n == "bio-ner" || n == "ner") return TagScheme::bio;
  throw std::invalid_argument("unknown tag scheme '" + std::string(name) + "'");
}

std::string to_string(GroupStrategy strategy) {
  switch (strategy) {
    case GroupStrategy::one: return "one";
    case GroupStrategy::random: return "random";
    case GroupStrategy::language: return "language";
  }
  return "?";
}

GroupStrategy parse_group_strategy(std::string_view name) {
  if (name == "one") return GroupStrategy::one;
  if (name == "random") return GroupStrategy::random;
  if (name == "language") return GroupStrategy::language;
  throw std::invalid_argument("unknown grouping strategy '" + std::string(name) + "'");
}

std::size_t repair_bio(std::vector<std::string>& labels) {
  std::size_t repaired = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!labels[i].starts_with("I-")) continue;
    const std::string type = labels[i].substr(2);
    const bool continues =
        i > 0 && (labels[i - 1] == "B-" + type || labels[i - 1] == "I-" + type);
    if (!continues) {
      labels[i] = "B-" + type;
      ++repaired;
    }
  }
  return repaired;
}

namespace {

std::ifstream open_input(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  return in;
}

void check_utf8(const fs::path& path, std::size_t line_no, std::string_view line) {
  if (auto bad = text::find_invalid_utf8(line))
    throw FormatError(path.string(), line_no,
                      "invalid UTF-8 at byte " + std::to_string(*bad));
}

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

}  // namespace

Corpus load_plaintext_corpus(const fs::path& path, const std::string& language_tag) {
  auto in = open_input(path);
  std::vector<Sentence> sentences;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    check_utf8(path, line_no, line);
    std::string t(text::trim(line));
    if (t.empty()) continue;
    // Tabs would break the dataset TSV.
    std::replace(t.begin(), t.end(), '\t', ' ');
    sentences.push_back({std::move(t), language_tag, sentences.size()});
  }
  if (sentences.empty()) throw FormatError(path.string(), 0, "no non-blank lines");
  return Corpus(path.stem().string(), {language_tag}, std::move(sentences));
}

DictionarySet load_dictionary(const fs::path& path) {
  auto in = open_input(path);
  DictionarySet dict;
  dict.name = path.stem().string();
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    check_utf8(path, line_no, line);
    const std::string_view entry = text::trim(line);
    if (entry.empty()) continue;
    if (text::has_whitespace(entry))
      throw FormatError(path.string(), line_no, "dictionary entry contains whitespace");
    dict.words.insert(text::to_lower(entry));
  }
  if (dict.words.empty()) throw FormatError(path.string(), 0, "dictionary is empty");
  return dict;
}

TaggedCorpus load_tagged_corpus(const fs::path& path, TagScheme scheme) {
  auto in = open_input(path);
  TaggedCorpus corpus;
  corpus.scheme = scheme;
  TaggedSequence current;
  auto flush = [&] {
    if (current.tokens.empty()) return;
    if (scheme == TagScheme::bio) corpus.repair_count += repair_bio(current.labels);
    corpus.tagset.insert(current.labels.begin(), current.labels.end());
    corpus.sequences.push_back(std::move(current));
    current = {};
  };
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    check_utf8(path, line_no, line);
    if (text::trim(line).empty()) {
      flush();
      continue;
    }
    const auto fields = text::split(line, '\t');
    if (fields.size() != 2)
      throw FormatError(path.string(), line_no, "expected exactly one tab");
    std::string token(text::trim(fields[0]));
    std::string label(text::trim(fields[1]));
    if (token.empty() || label.empty())
      throw FormatError(path.string(), line_no, "empty token or label");
    if (scheme == TagScheme::bio && label != "O" &&
        !((label.starts_with("B-") || label.starts_with("I-")) && label.size() > 2))
      throw FormatError(path.string(), line_no, "label '" + label + "' is not BIO");
    current.tokens.push_back(std::move(token));
    current.labels.push_back(std::move(label));
  }
  flush();
  if (corpus.sequences.empty()) throw FormatError(path.string(), 0, "no sequences");
  return corpus;
}

std::size_t mix_take_count(std::size_t target, double scarce_fraction, std::size_t available) {
  // The epsilon keeps exact products such as 0.95 * 20 from flooring to 18.
  const double scaled = scarce_fraction * static_cast<double>(available);
  const auto cap = static_cast<std::size_t>(std::floor(scaled + 1e-9 * std::max(1.0, scaled)));
  return std::min({target, cap, available});
}

Corpus build_mixed_dataset(const Corpus& creole, const std::vector<Corpus>& aux,
                           const MixPolicy& policy) {
  policy.validate();
  const std::size_t target = policy.target_per_language.value_or(creole.size());

  std::vector<std::string> inventory = creole.language_inventory();
  std::vector<Sentence> out;
  for (const auto& s : creole.sentences()) out.push_back({s.text, s.source_language, out.size()});

  for (std::size_t a = 0; a < aux.size(); ++a) {
    const Corpus& c = aux[a];
    for (const auto& tag : c.language_inventory()) {
      if (std::find(inventory.begin(), inventory.end(), tag) != inventory.end())
        throw std::invalid_argument("auxiliary language '" + tag + "' collides with another corpus");
      inventory.push_back(tag);
    }
    const std::size_t take = mix_take_count(target, policy.scarce_fraction, c.size());
    std::vector<std::size_t> idx(c.size());
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(mix_seed(policy.seed, a));
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(take);
    std::sort(idx.begin(), idx.end());
    for (std::size_t i : idx) out.push_back({c[i].text, c[i].source_language, out.size()});
  }
  return Corpus(creole.name() + "-mixed", std::move(inventory), std::move(out));
}

namespace {

std::pair<Corpus, Corpus> partition(const Corpus& corpus, std::vector<std::size_t> candidates,
                                    std::size_t dev_count, std::uint64_t seed) {
  if (dev_count == 0) throw std::invalid_argument("dev split would be empty");
  if (dev_count > candidates.size() || dev_count >= corpus.size())
    throw std::invalid_argument("dev split would leave no training data");
  Rng rng(mix_seed(seed, 0xDE5));
  std::shuffle(candidates.begin(), candidates.end(), rng);
  std::vector<bool> in_dev(corpus.size(), false);
  for (std::size_t k = 0; k < dev_count; ++k) in_dev[candidates[k]] = true;

  std::vector<Sentence> train, dev;
  for (std::size_t i = 0; i < corpus.size(); ++i)
    (in_dev[i] ? dev : train).push_back(corpus[i]);
  return {Corpus(corpus.name() + "-train", corpus.language_inventory(), std::move(train)),
          Corpus(corpus.name() + "-dev", corpus.language_inventory(), std::move(dev))};
}

std::vector<std::size_t> dev_candidates(const Corpus& corpus) {
  std::vector<std::size_t> idx;
  const bool restrict = corpus.has_creole();
  for (std::size_t i = 0; i < corpus.size(); ++i)
    if (!restrict || is_creole_tag(corpus[i].source_language)) idx.push_back(i);
  return idx;
}

}  // namespace

std::pair<Corpus, Corpus> split_train_dev(const Corpus& corpus, double dev_ratio,
                                          std::uint64_t seed) {
  if (!(dev_ratio > 0.0 && dev_ratio < 1.0))
    throw std::invalid_argument("dev_ratio must lie in (0, 1)");
  if (corpus.size() < 2) throw std::invalid_argument("need at least 2 sentences to split");
  auto candidates = dev_candidates(corpus);
  const auto dev_count =
      static_cast<std::size_t>(std::llround(dev_ratio * static_cast<double>(candidates.size())));
  return partition(corpus, std::move(candidates), dev_count, seed);
}

std::pair<Corpus, Corpus> split_train_dev_count(const Corpus& corpus, std::size_t dev_count,
                                                std::uint64_t seed) {
  return partition(corpus, dev_candidates(corpus), dev_count, seed);
}

void write_dataset_tsv(const fs::path& path, const Corpus& corpus,
                       const std::vector<int>* group_ids) {
  if (group_ids && group_ids->size() != corpus.size())
    throw std::invalid_argument("group id count does not match corpus size");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << "text\tsource_language\tgroup_id\n";
  for (std::size_t i = 0; i < corpus.size(); ++i)
    out << corpus[i].text << '\t' << corpus[i].source_language << '\t'
        << (group_ids ? (*group_ids)[i] : -1) << '\n';
  if (!out) throw Error("write failed for '" + path.string() + "'");
}

void write_dataset_tsv(const fs::path& path, const GroupedDataset& dataset) {
  write_dataset_tsv(path, dataset.corpus, &dataset.group_ids);
}

std::pair<Corpus, std::vector<int>> read_dataset_tsv(const fs::path& path,
                                                     const std::string& name) {
  auto in = open_input(path);
  std::string line;
  std::size_t line_no = 0;
  std::vector<Sentence> sentences;
  std::vector<std::string> inventory;
  std::vector<int> groups;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (line_no == 1 && line.starts_with("text\t")) continue;
    if (line.empty()) continue;
    check_utf8(path, line_no, line);
    const auto f = text::split(line, '\t');
    if (f.size() != 3) throw FormatError(path.string(), line_no, "expected 3 tab-separated fields");
    if (std::find(inventory.begin(), inventory.end(), f[1]) == inventory.end())
      inventory.push_back(f[1]);
    try {
      groups.push_back(std::stoi(f[2]));
    } catch (const std::exception&) {
      throw FormatError(path.string(), line_no, "bad group id '" + f[2] + "'");
    }
    sentences.push_back({f[0], f[1], sentences.size()});
  }
  if (sentences.empty()) throw FormatError(path.string(), 0, "no rows");
  return {Corpus(name, std::move(inventory), std::move(sentences)), std::move(groups)};
}

}  // namespace creole
