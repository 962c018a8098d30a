#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "creole/corpus.hpp"
#include "creole/encoder.hpp"
#include "creole/rng.hpp"
#include "creole/vocab.hpp"

namespace creole {

struct MaskPolicy {
  double rate = 0.15;
  double p_mask = 0.8;
  double p_random = 0.1;
  double p_keep = 0.1;
  std::size_t min_masks_per_example = 1;

  void validate() const;
};

// Selects each real token independently with probability `rate` (forcing
// min_masks_per_example selections in rows that drew fewer), then replaces a
// selected token by MASK, by a uniform non-reserved id, or keeps it.
MaskedBatch apply_masking(const TokenBatch& batch, const MaskPolicy& policy,
                          std::size_t vocab_size, Rng& rng);

// Arithmetic mean. Throws on empty input.
double erm_loss(std::span<const double> per_example_losses);

// A point on the probability simplex over DRO groups.
struct GroupWeights {
  std::vector<double> q;
  double eta_q = 0.01;

  static GroupWeights uniform(std::size_t groups, double eta_q);
  std::size_t group_count() const { return q.size(); }
};

struct DroUpdate {
  GroupWeights weights;
  double loss = 0.0;  // sum over present groups of q'_g * L_g
};

// Exponentiated-gradient step: q'_g ∝ q_g exp(eta_q L_g) for present groups,
// q'_g ∝ q_g for absent ones (nullopt), renormalized. Throws when every group
// is absent or a present loss is non-finite.
DroUpdate dro_update(const GroupWeights& q, const std::vector<std::optional<double>>& group_losses);
DroUpdate dro_update(const GroupWeights& q, const std::vector<std::optional<double>>& group_losses,
                     double eta_q);

// Mean loss within each group present in a batch. With token weights the
// mean is weighted by them (e.g. masked-token counts) instead of uniform.
struct GroupAggregate {
  std::vector<std::optional<double>> losses;
  std::vector<double> mass;  // summed weight per group (example count when unweighted)
};

GroupAggregate aggregate_by_group(std::span<const double> losses, std::span<const int> groups,
                                  std::size_t group_count,
                                  std::span<const double> token_weights = {});

enum class Objective { erm, dro };

std::string to_string(Objective objective);
Objective parse_objective(std::string_view name);

struct TrainConfig {
  Objective objective = Objective::erm;
  GroupStrategy strategy = GroupStrategy::one;
  SizePreset preset = SizePreset::tiny();
  std::int64_t steps = 2000;          // the original setup ran 100,000
  std::size_t batch_size = 16;
  double lr = 3e-4;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eta_q = 0.01;
  MaskPolicy mask;
  std::uint64_t seed = 0;
  std::int64_t checkpoint_interval = 0;  // 0: only at the final step
  bool token_weighted_groups = false;

  void validate() const;
};

struct TrainLogRow {
  std::int64_t step = 0;
  double loss = 0.0;                       // the optimized objective value
  std::vector<double> group_losses;        // NaN for groups absent from the batch
  std::vector<double> q;                   // group weights after the step
};

struct TrainResult {
  EncoderParams final_params;
  EncoderParams best_params;
  std::int64_t best_step = 0;
  double best_dev_loss = 0.0;              // NaN without a dev set
  std::vector<TrainLogRow> log;
};

using CheckpointCallback = std::function<void(std::int64_t step, const EncoderParams& params)>;

// Seeded masked-LM training under ERM or online group DRO. Per step: mask,
// forward, per-example losses, per-group means, ERM mean or DRO update,
// backward on the scalar objective, AdamW step. With a dev corpus the best
// checkpoint (lowest dev masked-LM loss) is retained.
TrainResult train(const GroupedDataset& dataset, const Vocab& vocab, const TrainConfig& config,
                  const Corpus* dev = nullptr, const CheckpointCallback& on_checkpoint = {});

// Mean per-example masked-LM loss over a corpus, with masking seeded by `seed`.
double masked_lm_loss(const EncoderParams& params, const Vocab& vocab, const Corpus& corpus,
                      const MaskPolicy& policy, std::uint64_t seed, std::size_t batch_size = 32);

// TSV: step, loss, L_0..L_{G-1}, q_0..q_{G-1}.
void write_train_log(std::ostream& out, const std::vector<TrainLogRow>& log);

}  // namespace creole
