#include "creole/objective.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include "creole/error.hpp"
#include "creole/optimizer.hpp"

namespace creole {

void MaskPolicy::validate() const {
  if (!(rate > 0.0 && rate <= 1.0)) throw std::invalid_argument("mask_rate out of range");
  if (p_mask < 0 || p_random < 0 || p_keep < 0 || std::abs(p_mask + p_random + p_keep - 1.0) > 1e-9)
    throw std::invalid_argument("mask split must be non-negative and sum to 1");
}

MaskedBatch apply_masking(const TokenBatch& batch, const MaskPolicy& policy,
                          std::size_t vocab_size, Rng& rng) {
  policy.validate();
  if (vocab_size <= static_cast<std::size_t>(Vocab::kReserved))
    throw std::invalid_argument("vocabulary has no maskable tokens");
  MaskedBatch out{batch, {}};
  std::vector<std::size_t> selected;
  for (std::size_t r = 0; r < batch.rows; ++r) {
    selected.clear();
    std::vector<std::size_t> real;
    for (std::size_t c = 0; c < batch.cols; ++c)
      if (batch.real(r, c)) real.push_back(c);
    if (real.empty()) throw std::invalid_argument("example without real tokens");
    for (std::size_t c : real)
      if (uniform01(rng) < policy.rate) selected.push_back(c);
    const std::size_t want = std::min(policy.min_masks_per_example, real.size());
    while (selected.size() < want) {
      std::vector<std::size_t> remaining;
      for (std::size_t c : real)
        if (std::find(selected.begin(), selected.end(), c) == selected.end()) remaining.push_back(c);
      selected.push_back(remaining[uniform_index(rng, remaining.size())]);
    }
    std::sort(selected.begin(), selected.end());
    for (std::size_t c : selected) {
      const int original = batch.id(r, c);
      const double u = uniform01(rng);
      if (u < policy.p_mask) {
        out.tokens.id(r, c) = Vocab::kMask;
      } else if (u < policy.p_mask + policy.p_random) {
        out.tokens.id(r, c) = static_cast<int>(
            Vocab::kReserved + uniform_index(rng, vocab_size - static_cast<std::size_t>(Vocab::kReserved)));
      }
      out.masked.push_back({r, c, original});
    }
  }
  return out;
}

double erm_loss(std::span<const double> losses) {
  if (losses.empty()) throw std::invalid_argument("erm_loss of an empty batch");
  double s = 0.0;
  for (double l : losses) s += l;
  return s / static_cast<double>(losses.size());
}

GroupWeights GroupWeights::uniform(std::size_t groups, double eta_q) {
  if (groups == 0) throw std::invalid_argument("need at least one group");
  return {std::vector<double>(groups, 1.0 / static_cast<double>(groups)), eta_q};
}

DroUpdate dro_update(const GroupWeights& q, const std::vector<std::optional<double>>& group_losses) {
  return dro_update(q, group_losses, q.eta_q);
}

DroUpdate dro_update(const GroupWeights& q, const std::vector<std::optional<double>>& group_losses,
                     double eta_q) {
  const std::size_t G = q.group_count();
  if (group_losses.size() != G) throw std::invalid_argument("one loss slot per group required");
  if (std::none_of(group_losses.begin(), group_losses.end(), [](const auto& l) { return l.has_value(); }))
    throw std::invalid_argument("dro_update with every group absent");
  // Work in log space so large eta * L cannot overflow.
  std::vector<double> logw(G);
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t g = 0; g < G; ++g) {
    if (group_losses[g] && !std::isfinite(*group_losses[g]))
      throw NumericError("non-finite group loss");
    logw[g] = std::log(q.q[g]) + (group_losses[g] ? eta_q * *group_losses[g] : 0.0);
    mx = std::max(mx, logw[g]);
  }
  DroUpdate out{{std::vector<double>(G), eta_q}, 0.0};
  double z = 0.0;
  for (std::size_t g = 0; g < G; ++g) z += out.weights.q[g] = std::exp(logw[g] - mx);
  for (std::size_t g = 0; g < G; ++g) {
    out.weights.q[g] /= z;
    if (group_losses[g]) out.loss += out.weights.q[g] * *group_losses[g];
  }
  return out;
}

GroupAggregate aggregate_by_group(std::span<const double> losses, std::span<const int> groups,
                                  std::size_t group_count, std::span<const double> token_weights) {
  if (groups.size() != losses.size() || (!token_weights.empty() && token_weights.size() != losses.size()))
    throw std::invalid_argument("losses, groups and weights must align");
  GroupAggregate agg{std::vector<std::optional<double>>(group_count), std::vector<double>(group_count, 0.0)};
  std::vector<double> sums(group_count, 0.0);
  for (std::size_t i = 0; i < losses.size(); ++i) {
    const auto g = static_cast<std::size_t>(groups[i]);
    if (groups[i] < 0 || g >= group_count) throw std::invalid_argument("group id out of range");
    const double w = token_weights.empty() ? 1.0 : token_weights[i];
    sums[g] += w * losses[i];
    agg.mass[g] += w;
  }
  for (std::size_t g = 0; g < group_count; ++g)
    if (agg.mass[g] > 0) agg.losses[g] = sums[g] / agg.mass[g];
  return agg;
}

std::string to_string(Objective objective) { return objective == Objective::dro ? "dro" : "erm"; }

Objective parse_objective(std::string_view name) {
  if (name == "erm") return Objective::erm;
  if (name == "dro") return Objective::dro;
  throw std::invalid_argument("unknown objective '" + std::string(name) + "'");
}

void TrainConfig::validate() const {
  preset.validate();
  mask.validate();
  if (steps <= 0) throw std::invalid_argument("steps must be positive");
  if (batch_size == 0) throw std::invalid_argument("batch_size must be positive");
  if (!(lr > 0.0)) throw std::invalid_argument("lr must be positive");
  if (!(weight_decay >= 0.0)) throw std::invalid_argument("weight_decay must be non-negative");
  if (!(eta_q >= 0.0)) throw std::invalid_argument("eta_q must be non-negative");
  if (checkpoint_interval < 0) throw std::invalid_argument("checkpoint_interval must be non-negative");
}

namespace {

std::vector<std::vector<int>> tokenize_all(const Corpus& corpus, const Vocab& vocab, std::size_t max_len) {
  std::vector<std::vector<int>> out;
  out.reserve(corpus.size());
  for (const auto& s : corpus.sentences()) out.push_back(tokenize(vocab, s.text, max_len));
  return out;
}

}  // namespace

double masked_lm_loss(const EncoderParams& params, const Vocab& vocab, const Corpus& corpus,
                      const MaskPolicy& policy, std::uint64_t seed, std::size_t batch_size) {
  const auto seqs = tokenize_all(corpus, vocab, static_cast<std::size_t>(params.preset.max_len));
  Rng rng(seed);
  double total = 0.0;
  std::size_t n = 0;
  for (std::size_t start = 0; start < seqs.size(); start += batch_size) {
    const std::size_t end = std::min(seqs.size(), start + batch_size);
    std::vector<std::vector<int>> chunk;
    for (std::size_t i = start; i < end; ++i)
      if (!seqs[i].empty()) chunk.push_back(seqs[i]);
    if (chunk.empty()) continue;
    const TokenBatch batch = TokenBatch::from_sequences(chunk);
    const MaskedBatch mb = apply_masking(batch, policy, params.vocab_size, rng);
    const MlmStep<float> step(params, mb);
    for (double l : step.example_losses()) total += l;
    n += chunk.size();
  }
  if (n == 0) throw std::invalid_argument("no scorable sentences for masked LM loss");
  return total / static_cast<double>(n);
}

TrainResult train(const GroupedDataset& dataset, const Vocab& vocab, const TrainConfig& config,
                  const Corpus* dev, const CheckpointCallback& on_checkpoint) {
  config.validate();
  const Corpus& corpus = dataset.corpus;
  const std::size_t G = dataset.group_count;
  if (dataset.group_ids.size() != corpus.size() || G == 0)
    throw std::invalid_argument("dataset groups do not match its corpus");
  if (config.objective == Objective::dro && dataset.strategy != config.strategy)
    throw std::invalid_argument("dataset was grouped with strategy '" + to_string(dataset.strategy) +
                                "' but the config asks for '" + to_string(config.strategy) + "'");

  const auto seqs = tokenize_all(corpus, vocab, static_cast<std::size_t>(config.preset.max_len));
  std::size_t known = 0;
  for (const auto& s : seqs) known += static_cast<std::size_t>(std::count_if(s.begin(), s.end(), [](int id) { return id >= Vocab::kReserved; }));
  if (known == 0) throw std::invalid_argument("vocabulary does not cover any token of the dataset");

  TrainResult result;
  EncoderParams params = init_encoder(config.preset, vocab.size(), config.seed);
  AdamW opt({config.lr, config.weight_decay, config.beta1, config.beta2, 1e-8});
  GroupWeights q = GroupWeights::uniform(G, config.eta_q);

  Rng order_rng(mix_seed(config.seed, 1));
  Rng mask_rng(mix_seed(config.seed, 2));
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), order_rng);
  std::size_t cursor = 0;

  const double nan = std::numeric_limits<double>::quiet_NaN();
  result.best_dev_loss = nan;
  const std::uint64_t dev_seed = mix_seed(config.seed, 4);
  auto checkpoint = [&](std::int64_t step) {
    if (on_checkpoint) on_checkpoint(step, params);
    if (!dev) {
      result.best_params = params;
      result.best_step = step;
      return;
    }
    const double dl = masked_lm_loss(params, vocab, *dev, config.mask, dev_seed);
    if (std::isnan(result.best_dev_loss) || dl < result.best_dev_loss) {
      result.best_dev_loss = dl;
      result.best_params = params;
      result.best_step = step;
    }
  };

  std::vector<std::vector<int>> batch_seqs;
  std::vector<int> batch_groups;
  for (std::int64_t step = 1; step <= config.steps; ++step) {
    batch_seqs.clear();
    batch_groups.clear();
    while (batch_seqs.size() < config.batch_size) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), order_rng);
        cursor = 0;
      }
      const std::size_t i = order[cursor++];
      if (seqs[i].empty()) continue;
      batch_seqs.push_back(seqs[i]);
      batch_groups.push_back(dataset.group_ids[i]);
    }
    const TokenBatch batch = TokenBatch::from_sequences(batch_seqs);
    const MaskedBatch mb = apply_masking(batch, config.mask, vocab.size(), mask_rng);

    try {
      const MlmStep<float> mlm(params, mb);
      const auto& losses = mlm.example_losses();
      std::vector<double> token_w;
      if (config.token_weighted_groups)
        for (auto m : mlm.masks_per_example()) token_w.push_back(static_cast<double>(m));
      const GroupAggregate agg = aggregate_by_group(losses, batch_groups, G, token_w);

      TrainLogRow row;
      row.step = step;
      std::vector<double> weights(losses.size());
      if (config.objective == Objective::erm) {
        if (config.token_weighted_groups) {
          const double total = std::accumulate(token_w.begin(), token_w.end(), 0.0);
          row.loss = 0.0;
          for (std::size_t b = 0; b < losses.size(); ++b) {
            weights[b] = token_w[b] / total;
            row.loss += weights[b] * losses[b];
          }
        } else {
          row.loss = erm_loss(losses);
          std::fill(weights.begin(), weights.end(), 1.0 / static_cast<double>(losses.size()));
        }
      } else {
        const DroUpdate upd = dro_update(q, agg.losses);
        q = upd.weights;
        row.loss = upd.loss;
        for (std::size_t b = 0; b < losses.size(); ++b) {
          const auto g = static_cast<std::size_t>(batch_groups[b]);
          const double w = config.token_weighted_groups ? token_w[b] : 1.0;
          weights[b] = q.q[g] * w / agg.mass[g];
        }
      }
      if (!std::isfinite(row.loss)) throw NumericError("non-finite objective");
      for (const auto& l : agg.losses) row.group_losses.push_back(l.value_or(nan));
      row.q = q.q;
      opt.step(params, mlm.gradient(weights));
      result.log.push_back(std::move(row));
    } catch (const NumericError& e) {
      throw NumericError("training diverged at step " + std::to_string(step) + ": " + e.what());
    }

    if ((config.checkpoint_interval > 0 && step % config.checkpoint_interval == 0) ||
        step == config.steps)
      checkpoint(step);
  }
  result.final_params = std::move(params);
  return result;
}

void write_train_log(std::ostream& out, const std::vector<TrainLogRow>& log) {
  const std::size_t G = log.empty() ? 0 : log.front().q.size();
  out << "step\tloss";
  for (std::size_t g = 0; g < G; ++g) out << "\tL_" << g;
  for (std::size_t g = 0; g < G; ++g) out << "\tq_" << g;
  out << '\n';
  const auto old = out.precision(17);
  for (const auto& r : log) {
    out << r.step << '\t' << r.loss;
    for (double l : r.group_losses) out << '\t' << l;
    for (double v : r.q) out << '\t' << v;
    out << '\n';
  }
  out.precision(old);
}

}  // namespace creole
