#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "creole/corpus.hpp"
#include "creole/encoder.hpp"
#include "creole/rng.hpp"
#include "creole/vocab.hpp"

namespace creole {

// A token sequence with one position to predict. ids[position] is already
// replaced (normally by Vocab::kMask).
struct MaskedQuery {
  std::vector<int> ids;
  std::size_t position = 0;
};

// Anything that scores a masked position over the vocabulary.
class MaskedLanguageModel {
 public:
  virtual ~MaskedLanguageModel() = default;
  virtual std::size_t vocab_size() const = 0;
  virtual std::size_t max_len() const = 0;
  // One log-probability vector (length vocab_size()) per query.
  virtual std::vector<std::vector<double>> masked_log_probs(
      const std::vector<MaskedQuery>& queries) const = 0;
};

class EncoderLM : public MaskedLanguageModel {
 public:
  explicit EncoderLM(EncoderParams params, std::size_t batch_size = 32)
      : params_(std::move(params)), batch_size_(batch_size) {}

  std::size_t vocab_size() const override { return params_.vocab_size; }
  std::size_t max_len() const override { return static_cast<std::size_t>(params_.preset.max_len); }
  std::vector<std::vector<double>> masked_log_probs(
      const std::vector<MaskedQuery>& queries) const override;
  const EncoderParams& params() const { return params_; }

 private:
  EncoderParams params_;
  std::size_t batch_size_;
};

inline const std::vector<int> kDefaultKs = {1, 5, 10};

struct PrecisionResult {
  std::map<int, double> precision;  // k -> hits / evaluated
  std::size_t evaluated = 0;
  std::size_t skipped = 0;          // sentences without a maskable position
};

// Zero-based rank of `gold` under descending score. The gold id is placed at
// a uniformly drawn position among the ids tied with it, so an all-equal
// distribution hits at chance rate. Always consumes one draw from `rng`.
std::size_t gold_rank(const std::vector<double>& scores, int gold, Rng& rng);

// One seeded random in-vocabulary position per sentence is masked; hit@k when
// the gold id ranks in the top k. The position is drawn from a generator
// seeded by (seed, sentence id), so results do not depend on corpus order.
PrecisionResult precision_at_k(const MaskedLanguageModel& model, const Vocab& vocab,
                               const Corpus& corpus, const std::vector<int>& ks,
                               std::uint64_t seed);

// As precision_at_k, but only tokens whose surface form is in the dictionary
// are candidates. Sentences with no candidate are skipped and counted.
PrecisionResult dict_precision_at_k(const MaskedLanguageModel& model, const Vocab& vocab,
                                    const Corpus& corpus, const DictionarySet& dict,
                                    const std::vector<int>& ks, std::uint64_t seed);

struct PllResult {
  double pll = 0.0;          // reported value: mean negative pseudo-log-likelihood
  std::size_t sentences = 0;
  std::size_t skipped = 0;   // empty after tokenization
};

// Every position is masked one at a time; per-sentence mean log-probability of
// the original tokens, averaged over sentences and negated (lower is better).
PllResult mean_pll(const MaskedLanguageModel& model, const Vocab& vocab, const Corpus& corpus);

struct EvalReport {
  std::string model_id;
  std::string dataset_id;
  std::uint64_t seed = 0;
  std::map<int, double> p_at_k;
  std::map<int, double> pd_at_k;
  double pll = 0.0;
  std::size_t evaluated = 0;
  std::size_t dict_evaluated = 0;
  std::size_t skipped_dict_sentences = 0;
};

EvalReport evaluate_intrinsic(const MaskedLanguageModel& model, const Vocab& vocab,
                              const Corpus& corpus, const DictionarySet* dict,
                              const std::vector<int>& ks, std::uint64_t seed,
                              std::string model_id, std::string dataset_id);

// report.tsv: model, dataset, seed, P@k..., P_D@k..., PLL, evaluated,
// dict_evaluated, skipped_dict. Precisions are fractions in [0, 1].
void write_report_tsv(std::ostream& out, const std::vector<EvalReport>& reports);
// Aligned table with percentages: model, dataset, P@1, P_D@1, PLL.
void write_report_text(std::ostream& out, const std::vector<EvalReport>& reports);

// ---------------------------------------------------------------------------
// Sequence tagging

// An encoder plus a linear per-token head d -> |tagset|.
struct Tagger {
  EncoderParams encoder;
  Tensor<float> head_weight;  // d x K
  Tensor<float> head_bias;    // K
  std::vector<std::string> tagset;
  TagScheme scheme = TagScheme::upos;
};

struct TaggerTrainOptions {
  int epochs = 10;
  double lr = 1e-3;
  double weight_decay = 0.01;
  std::size_t batch_size = 16;
  std::uint64_t seed = 0;
};

struct FinetuneResult {
  Tagger tagger;                   // weights of the best dev epoch
  std::vector<double> dev_curve;   // dev metric after each epoch
  int best_epoch = 0;              // 0 when no training happened
  std::size_t unknown_dev_labels = 0;
};

// Per-token cross-entropy on head and encoder. The head starts at zero weights
// with biases set to log tag priors, so an untrained tagger predicts the
// majority tag. Dev metric: accuracy (UPOS) or span F1 (BIO).
FinetuneResult finetune_tagger(const EncoderParams& model, const Vocab& vocab,
                               const TaggedCorpus& train, const TaggedCorpus& dev,
                               const TaggerTrainOptions& options);

std::vector<std::vector<std::string>> predict_tags(const Tagger& tagger, const Vocab& vocab,
                                                   const TaggedCorpus& corpus);

struct Span {
  std::string type;
  std::size_t begin = 0;  // inclusive
  std::size_t end = 0;    // inclusive
  auto operator<=>(const Span&) const = default;
};

// Spans of a BIO sequence. I-X continues an open X span; any other I-X opens one.
std::vector<Span> extract_spans(const std::vector<std::string>& labels);

struct SpanScore {
  std::size_t true_positives = 0;
  std::size_t predicted = 0;
  std::size_t gold = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// Exact boundary-and-type micro scores over all sequences.
SpanScore span_f1(const std::vector<std::vector<std::string>>& gold,
                  const std::vector<std::vector<std::string>>& predicted);

struct TaggingScores {
  double accuracy = 0.0;
  std::size_t tokens = 0;
  std::optional<SpanScore> spans;  // BIO only
};

TaggingScores score_tags(const TaggedCorpus& gold, const std::vector<std::vector<std::string>>& predicted);
TaggingScores evaluate_tagger(const Tagger& tagger, const Vocab& vocab, const TaggedCorpus& test);

}  // namespace creole
