#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "creole/config.hpp"
#include "creole/corpus.hpp"
#include "creole/error.hpp"
#include "creole/eval.hpp"
#include "creole/langid.hpp"
#include "creole/vocab.hpp"

namespace creole {

// A pipeline failure tagged with the stage it happened in.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& cause)
      : Error("stage '" + stage + "' failed: " + cause), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

// Everything the training and evaluation stages need, built from a config.
struct PreparedData {
  Corpus dataset;               // mixed or creole-only, before splitting
  Corpus train;
  Corpus dev;
  GroupedDataset grouped;       // train split with group ids
  Corpus eval_corpus;           // [eval] test when given, else dev
  std::string eval_name;
  Vocab vocab;
  std::optional<DictionarySet> dictionary;
};

// Trains from [grouping] langid.* corpora or loads [grouping] identifier.
Identifier obtain_identifier(const ExperimentConfig& config);

// load -> mix -> split -> group, plus the vocabulary of the train split.
PreparedData prepare_data(const ExperimentConfig& config, const RunSeeds& seeds);

std::string model_id(const TrainConfig& train);

// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

// manifest.tsv: config hash, seeds, then one row per artifact under `dir`
// (recursively, sorted) with its SHA-256.
void write_manifest(const std::filesystem::path& dir, const ExperimentConfig& config);

// Individual stages, each writing into `out` (created when missing).
void build_data_stage(const ExperimentConfig& config, const std::filesystem::path& out);
void langid_train_stage(const ExperimentConfig& config, const std::filesystem::path& out);
void langid_report_stage(const ExperimentConfig& config, const std::filesystem::path& out);
void train_stage(const ExperimentConfig& config, const std::filesystem::path& out);
// eval, tag and pad read best.ckpt and vocab.txt from `out`.
std::vector<EvalReport> eval_stage(const ExperimentConfig& config, const std::filesystem::path& out);
void tag_stage(const ExperimentConfig& config, const std::filesystem::path& out);
void pad_stage(const ExperimentConfig& config, const std::filesystem::path& out);

// Full pipeline into `out`: data, training, intrinsic evaluation, then
// tagging and PAD when configured, then the manifest. On failure a FAILED
// file naming the stage is written, partial outputs are kept and the
// StageError is rethrown.
std::vector<EvalReport> run_experiment(const ExperimentConfig& config, const std::filesystem::path& out);

enum class SweepAxis { preset, weight_decay };

SweepAxis parse_sweep_axis(std::string_view name);
std::string to_string(SweepAxis axis);
std::vector<std::string> default_sweep_values(SweepAxis axis);

struct SweepRow {
  std::string objective;  // "erm" or "dro-language"
  std::string value;
  EvalReport report;
};

// One run per (objective, value) over a shared data split. ERM gets a single
// row at the base weight decay on the weight_decay axis. Writes one
// subdirectory per run plus sweep.tsv and sweep.txt.
std::vector<SweepRow> run_sweep(const ExperimentConfig& config, SweepAxis axis,
                                const std::vector<std::string>& values, const std::filesystem::path& out);

// Columns: objective, <axis>, P@1, P_D@1, PLL.
void write_sweep_tsv(std::ostream& out, SweepAxis axis, const std::vector<SweepRow>& rows);
void write_sweep_text(std::ostream& out, SweepAxis axis, const std::vector<SweepRow>& rows);

}  // namespace creole
