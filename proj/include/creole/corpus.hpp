#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace creole {

// Language tags for creoles carry this prefix, e.g. "creole:pcm".
inline constexpr std::string_view kCreolePrefix = "creole:";

bool is_creole_tag(std::string_view tag);

struct Sentence {
  std::string text;
  std::string source_language;
  std::size_t id = 0;
};

// An ordered, immutable collection of sentences. Order is load order.
class Corpus {
 public:
  // Throws std::invalid_argument when empty, when ids repeat, when a text is
  // blank, or when a tag is missing from the inventory.
  Corpus(std::string name, std::vector<std::string> language_inventory,
         std::vector<Sentence> sentences);

  const std::string& name() const { return name_; }
  const std::vector<std::string>& language_inventory() const { return inventory_; }
  const std::vector<Sentence>& sentences() const { return sentences_; }
  std::size_t size() const { return sentences_.size(); }
  const Sentence& operator[](std::size_t i) const { return sentences_[i]; }

  // True when at least one sentence carries a creole tag.
  bool has_creole() const;
  // Index of `tag` in the inventory, or nullopt.
  std::optional<std::size_t> language_index(std::string_view tag) const;

 private:
  std::string name_;
  std::vector<std::string> inventory_;
  std::vector<Sentence> sentences_;
};

struct MixPolicy {
  std::optional<std::size_t> target_per_language;  // defaults to the creole size
  double scarce_fraction = 0.95;
  double dev_ratio = 0.05;
  std::uint64_t seed = 0;

  void validate() const;
};

struct DictionarySet {
  std::string name;
  std::set<std::string> words;

  // Case-insensitive, exact surface-form match.
  bool contains(std::string_view word) const;
  std::size_t size() const { return words.size(); }
};

enum class TagScheme { upos, bio };

std::string to_string(TagScheme scheme);
TagScheme parse_tag_scheme(std::string_view name);

struct TaggedSequence {
  std::vector<std::string> tokens;
  std::vector<std::string> labels;
};

struct TaggedCorpus {
  std::vector<TaggedSequence> sequences;
  std::set<std::string> tagset;
  TagScheme scheme = TagScheme::upos;
  std::size_t repair_count = 0;  // orphan I-X labels promoted to B-X at load
};

// Promotes every I-X that does not continue a B-X/I-X run to B-X. Returns the
// number of labels changed. Idempotent.
std::size_t repair_bio(std::vector<std::string>& labels);

// How DRO groups were formed for a dataset.
enum class GroupStrategy { one, random, language };

std::string to_string(GroupStrategy strategy);
GroupStrategy parse_group_strategy(std::string_view name);

// A corpus plus one dense group id per sentence. group_keys maps each dense id
// back to the raw key it was relabeled from (a language index or a language
// bitmask, depending on how the groups were formed).
struct GroupedDataset {
  Corpus corpus;
  std::vector<int> group_ids;
  std::size_t group_count = 0;
  std::vector<std::uint64_t> group_keys;
  GroupStrategy strategy = GroupStrategy::one;
};

Corpus load_plaintext_corpus(const std::filesystem::path& path, const std::string& language_tag);
DictionarySet load_dictionary(const std::filesystem::path& path);
TaggedCorpus load_tagged_corpus(const std::filesystem::path& path, TagScheme scheme);

// Take count for one auxiliary corpus: min(target, floor(scarce_fraction * available)).
std::size_t mix_take_count(std::size_t target, double scarce_fraction, std::size_t available);

// Creole corpus plus a seeded uniform sample (without replacement) from each
// auxiliary corpus. Sentences keep their source language; ids are reassigned
// 0..n-1 in output order (creole first, then aux corpora in argument order).
Corpus build_mixed_dataset(const Corpus& creole, const std::vector<Corpus>& aux,
                           const MixPolicy& policy);

// Seeded train/dev partition. When the corpus holds creole-tagged sentences the
// dev set is drawn from (and sized by) that subset only. Sentence ids and
// relative order are preserved in both halves.
std::pair<Corpus, Corpus> split_train_dev(const Corpus& corpus, double dev_ratio,
                                          std::uint64_t seed);
// Same partition scheme with an explicit dev size.
std::pair<Corpus, Corpus> split_train_dev_count(const Corpus& corpus, std::size_t dev_count,
                                                std::uint64_t seed);

// TSV with a header row: text, source_language, group_id (-1 when ungrouped).
void write_dataset_tsv(const std::filesystem::path& path, const Corpus& corpus,
                       const std::vector<int>* group_ids = nullptr);
void write_dataset_tsv(const std::filesystem::path& path, const GroupedDataset& dataset);
// Reads a dataset TSV back. Group ids are returned as stored (-1 = ungrouped).
std::pair<Corpus, std::vector<int>> read_dataset_tsv(const std::filesystem::path& path,
                                                     const std::string& name);

}  // namespace creole
