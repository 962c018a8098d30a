#pragma once

// Experiment configuration: a flat sectioned key = value file.
//
//   seed = 13
//   output = runs/fixture
//
//   [data]
//   creole = pcm.txt
//   aux.en = en.txt
//
// Lines starting with '#' or ';' are comments. Relative paths resolve against
// the directory holding the config file. docs/config.md lists every key.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "creole/corpus.hpp"
#include "creole/divergence.hpp"
#include "creole/eval.hpp"
#include "creole/langid.hpp"
#include "creole/objective.hpp"

namespace creole {

struct ConfigEntry {
  std::string section;  // "" before the first header
  std::string key;
  std::string value;
  std::size_t line = 0;
};

// Throws FormatError on malformed lines and repeated keys.
std::vector<ConfigEntry> parse_config_text(std::string_view text, const std::string& origin);

enum class DataMode { mixed, creole_only };

std::string to_string(DataMode mode);

struct LabeledPath {
  std::string language;
  std::filesystem::path path;
};

struct PadPair {
  std::string label;
  std::string language;
  std::string domain1;
  std::filesystem::path path1;
  std::string domain2;
  std::filesystem::path path2;
};

struct ExperimentConfig {
  std::filesystem::path config_path;
  std::string config_text;
  std::uint64_t seed = 0;
  std::filesystem::path output;

  // [data]
  std::filesystem::path creole;
  std::string creole_language = "creole:unknown";
  std::vector<LabeledPath> aux;
  DataMode mode = DataMode::mixed;
  std::optional<std::size_t> target_per_language;
  double scarce_fraction = 0.95;
  double dev_ratio = 0.05;
  std::optional<std::size_t> dev_count;
  std::size_t vocab_size = 1000;
  std::size_t min_count = 1;

  // [grouping]
  GroupStrategy strategy = GroupStrategy::one;
  std::size_t group_count = 4;
  double threshold = 0.001;
  std::optional<std::filesystem::path> identifier;
  std::vector<LabeledPath> langid_corpora;
  int langid_n_max = 4;
  double langid_alpha = 0.01;

  // [train]
  TrainConfig train;

  // [eval]
  std::vector<int> ks = kDefaultKs;
  std::optional<std::filesystem::path> dictionary;
  std::optional<std::filesystem::path> test;

  // [tagging]
  std::optional<std::filesystem::path> tag_train;
  std::optional<std::filesystem::path> tag_dev;
  std::optional<std::filesystem::path> tag_test;
  TagScheme tag_scheme = TagScheme::upos;
  TaggerTrainOptions tagging;

  // [divergence]
  std::vector<PadPair> pad_pairs;
  PadOptions pad;

  bool has_tagging() const { return tag_train.has_value(); }
  bool needs_identifier() const;
};

struct ConfigLoad {
  ExperimentConfig config;
  std::vector<std::string> errors;  // empty when the config is usable

  bool ok() const { return errors.empty(); }
};

// Parses and runs every field and cross-field check. Content problems are
// collected, never thrown.
ConfigLoad load_experiment_config(const std::filesystem::path& path);
ConfigLoad parse_experiment_config(std::string_view text, const std::filesystem::path& origin);

// Cross-field checks on an already parsed config (also rerun after overrides).
std::vector<std::string> check_config(const ExperimentConfig& config);

std::vector<std::string> validate_config(const std::filesystem::path& path);

// Independent child seeds for each pipeline stage.
struct RunSeeds {
  std::uint64_t mix = 0;
  std::uint64_t split = 0;
  std::uint64_t grouping = 0;
  std::uint64_t train = 0;
  std::uint64_t eval = 0;
  std::uint64_t tagging = 0;
  std::uint64_t pad = 0;

  static RunSeeds derive(std::uint64_t seed);
};

}  // namespace creole
