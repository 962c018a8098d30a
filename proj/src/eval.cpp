#include "creole/eval.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <iterator>
#include <limits>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include "creole/error.hpp"
#include "creole/optimizer.hpp"
#include "creole/table.hpp"
#include "creole/text.hpp"

namespace creole {

namespace {

template <typename Derived>
void log_softmax(const Eigen::MatrixBase<Derived>& logits, std::vector<double>& out) {
  const auto n = logits.size();
  out.resize(static_cast<std::size_t>(n));
  double mx = -std::numeric_limits<double>::infinity();
  for (Eigen::Index j = 0; j < n; ++j) mx = std::max(mx, static_cast<double>(logits(j)));
  double z = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) z += std::exp(static_cast<double>(logits(j)) - mx);
  const double lz = mx + std::log(z);
  for (Eigen::Index j = 0; j < n; ++j) out[static_cast<std::size_t>(j)] = static_cast<double>(logits(j)) - lz;
}

// Sentences are processed in slices so PLL queries stay bounded in memory.
constexpr std::size_t kQuerySlice = 2048;

using CandidateFn = std::function<bool(const std::string& surface, int id)>;

PrecisionResult precision_core(const MaskedLanguageModel& model, const Vocab& vocab,
                               const Corpus& corpus, const std::vector<int>& ks,
                               std::uint64_t seed, const CandidateFn& candidate) {
  if (ks.empty()) throw std::invalid_argument("at least one k required");
  for (int k : ks)
    if (k < 1) throw std::invalid_argument("k must be positive");
  if (model.vocab_size() != vocab.size()) throw std::invalid_argument("model and vocabulary sizes differ");

  struct Pending {
    MaskedQuery query;
    int gold = 0;
    Rng rng;
  };
  std::vector<Pending> pending;
  PrecisionResult result;
  for (const auto& s : corpus.sentences()) {
    const auto surface = surface_tokens(s.text, model.max_len());
    std::vector<int> ids;
    std::vector<std::size_t> cands;
    for (std::size_t i = 0; i < surface.size(); ++i) {
      ids.push_back(vocab.id(surface[i]));
      if (ids.back() >= Vocab::kReserved && candidate(surface[i], ids.back())) cands.push_back(i);
    }
    if (cands.empty()) {
      ++result.skipped;
      continue;
    }
    Rng rng(mix_seed(seed, s.id));
    const std::size_t pos = cands[uniform_index(rng, cands.size())];
    const int gold = ids[pos];
    ids[pos] = Vocab::kMask;
    pending.push_back({{std::move(ids), pos}, gold, rng});
  }

  std::map<int, std::size_t> hits;
  for (int k : ks) hits[k] = 0;
  for (std::size_t begin = 0; begin < pending.size(); begin += kQuerySlice) {
    const std::size_t end = std::min(pending.size(), begin + kQuerySlice);
    std::vector<MaskedQuery> queries;
    for (std::size_t i = begin; i < end; ++i) queries.push_back(pending[i].query);
    const auto scores = model.masked_log_probs(queries);
    for (std::size_t i = begin; i < end; ++i) {
      const std::size_t rank = gold_rank(scores[i - begin], pending[i].gold, pending[i].rng);
      for (auto& [k, h] : hits)
        if (rank < static_cast<std::size_t>(k)) ++h;
    }
  }
  result.evaluated = pending.size();
  for (auto& [k, h] : hits)
    result.precision[k] = result.evaluated ? static_cast<double>(h) / static_cast<double>(result.evaluated) : 0.0;
  return result;
}

std::string format_precision(const std::map<int, double>& m, int k, int digits, double scale) {
  auto it = m.find(k);
  return it == m.end() ? "NA" : format_fixed(it->second * scale, digits);
}

}  // namespace

std::vector<std::vector<double>> EncoderLM::masked_log_probs(const std::vector<MaskedQuery>& queries) const {
  std::vector<std::vector<double>> out;
  out.reserve(queries.size());
  const std::size_t bs = std::max<std::size_t>(batch_size_, 1);
  for (std::size_t begin = 0; begin < queries.size(); begin += bs) {
    const std::size_t end = std::min(queries.size(), begin + bs);
    std::vector<std::vector<int>> seqs;
    for (std::size_t i = begin; i < end; ++i) {
      const auto& q = queries[i];
      if (q.ids.empty() || q.ids.size() > max_len()) throw std::invalid_argument("query length out of range");
      if (q.position >= q.ids.size()) throw std::invalid_argument("query position out of range");
      seqs.push_back(q.ids);
    }
    const TokenBatch batch = TokenBatch::from_sequences(seqs);
    const EncoderPass<float> pass(params_, batch);
    Matrix<float> rows(static_cast<Eigen::Index>(end - begin), pass.hidden().cols());
    for (std::size_t i = begin; i < end; ++i)
      rows.row(static_cast<Eigen::Index>(i - begin)) =
          pass.hidden().row(static_cast<Eigen::Index>((i - begin) * batch.cols + queries[i].position));
    const Matrix<float> logits = output_logits(params_, rows);
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
      std::vector<double> lp;
      log_softmax(logits.row(r), lp);
      out.push_back(std::move(lp));
    }
  }
  return out;
}

std::size_t gold_rank(const std::vector<double>& scores, int gold, Rng& rng) {
  if (gold < 0 || static_cast<std::size_t>(gold) >= scores.size()) throw std::invalid_argument("gold id out of range");
  const double g = scores[static_cast<std::size_t>(gold)];
  std::size_t greater = 0, tied = 0;
  for (std::size_t j = 0; j < scores.size(); ++j) {
    if (static_cast<int>(j) == gold) continue;
    if (scores[j] > g) ++greater;
    else if (scores[j] == g) ++tied;
  }
  return greater + uniform_index(rng, tied + 1);
}

PrecisionResult precision_at_k(const MaskedLanguageModel& model, const Vocab& vocab, const Corpus& corpus,
                               const std::vector<int>& ks, std::uint64_t seed) {
  return precision_core(model, vocab, corpus, ks, seed, [](const std::string&, int) { return true; });
}

PrecisionResult dict_precision_at_k(const MaskedLanguageModel& model, const Vocab& vocab, const Corpus& corpus,
                                    const DictionarySet& dict, const std::vector<int>& ks, std::uint64_t seed) {
  return precision_core(model, vocab, corpus, ks, seed,
                        [&](const std::string& surface, int) { return dict.contains(surface); });
}

PllResult mean_pll(const MaskedLanguageModel& model, const Vocab& vocab, const Corpus& corpus) {
  if (model.vocab_size() != vocab.size()) throw std::invalid_argument("model and vocabulary sizes differ");
  PllResult result;
  double total = 0.0;
  std::vector<MaskedQuery> queries;
  std::vector<int> golds;
  std::vector<std::size_t> lengths;  // per sentence in the current slice

  auto flush = [&] {
    if (queries.empty()) return;
    const auto scores = model.masked_log_probs(queries);
    std::size_t q = 0;
    for (std::size_t n : lengths) {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i, ++q) s += scores[q][static_cast<std::size_t>(golds[q])];
      total += s / static_cast<double>(n);
    }
    queries.clear();
    golds.clear();
    lengths.clear();
  };

  for (const auto& s : corpus.sentences()) {
    const auto ids = tokenize(vocab, s.text, model.max_len());
    if (ids.empty()) {
      ++result.skipped;
      continue;
    }
    for (std::size_t i = 0; i < ids.size(); ++i) {
      MaskedQuery q{ids, i};
      q.ids[i] = Vocab::kMask;
      queries.push_back(std::move(q));
      golds.push_back(ids[i]);
    }
    lengths.push_back(ids.size());
    ++result.sentences;
    if (queries.size() >= kQuerySlice) flush();
  }
  flush();
  result.pll = result.sentences ? -total / static_cast<double>(result.sentences) : 0.0;
  return result;
}

EvalReport evaluate_intrinsic(const MaskedLanguageModel& model, const Vocab& vocab, const Corpus& corpus,
                              const DictionarySet* dict, const std::vector<int>& ks, std::uint64_t seed,
                              std::string model_id, std::string dataset_id) {
  EvalReport report;
  report.model_id = std::move(model_id);
  report.dataset_id = std::move(dataset_id);
  report.seed = seed;
  const auto p = precision_at_k(model, vocab, corpus, ks, seed);
  report.p_at_k = p.precision;
  report.evaluated = p.evaluated;
  if (dict) {
    const auto pd = dict_precision_at_k(model, vocab, corpus, *dict, ks, seed);
    report.pd_at_k = pd.precision;
    report.dict_evaluated = pd.evaluated;
    report.skipped_dict_sentences = pd.skipped;
  }
  report.pll = mean_pll(model, vocab, corpus).pll;
  return report;
}

void write_report_tsv(std::ostream& out, const std::vector<EvalReport>& reports) {
  std::vector<int> ks;
  for (const auto& r : reports)
    for (const auto& [k, v] : r.p_at_k)
      if (std::find(ks.begin(), ks.end(), k) == ks.end()) ks.push_back(k);
  std::sort(ks.begin(), ks.end());
  Table t;
  t.header = {"model", "dataset", "seed"};
  for (int k : ks) t.header.push_back("P@" + std::to_string(k));
  for (int k : ks) t.header.push_back("P_D@" + std::to_string(k));
  for (const char* h : {"PLL", "evaluated", "dict_evaluated", "skipped_dict"}) t.header.push_back(h);
  for (const auto& r : reports) {
    std::vector<std::string> row = {r.model_id, r.dataset_id, std::to_string(r.seed)};
    for (int k : ks) row.push_back(format_precision(r.p_at_k, k, 6, 1.0));
    for (int k : ks) row.push_back(format_precision(r.pd_at_k, k, 6, 1.0));
    row.push_back(format_fixed(r.pll, 6));
    row.push_back(std::to_string(r.evaluated));
    row.push_back(std::to_string(r.dict_evaluated));
    row.push_back(std::to_string(r.skipped_dict_sentences));
    t.add_row(std::move(row));
  }
  t.write_tsv(out);
}

void write_report_text(std::ostream& out, const std::vector<EvalReport>& reports) {
  Table t;
  t.header = {"model", "dataset", "P@1", "P_D@1", "PLL"};
  for (const auto& r : reports)
    t.add_row({r.model_id, r.dataset_id, format_precision(r.p_at_k, 1, 2, 100.0),
               format_precision(r.pd_at_k, 1, 2, 100.0), format_fixed(r.pll, 2)});
  t.write_aligned(out);
}

// ---------------------------------------------------------------------------
// Tagging

namespace {

struct Chunk {
  std::vector<int> ids;
  std::vector<int> labels;  // tag index, -1 when unknown
  std::size_t sequence = 0;
  std::size_t offset = 0;
};

std::vector<Chunk> make_chunks(const TaggedCorpus& corpus, const Vocab& vocab,
                               const std::vector<std::string>& tagset, std::size_t max_len,
                               std::size_t* unknown_labels) {
  std::vector<Chunk> chunks;
  for (std::size_t s = 0; s < corpus.sequences.size(); ++s) {
    const auto& seq = corpus.sequences[s];
    for (std::size_t off = 0; off < seq.tokens.size(); off += max_len) {
      Chunk c;
      c.sequence = s;
      c.offset = off;
      const std::size_t end = std::min(seq.tokens.size(), off + max_len);
      for (std::size_t i = off; i < end; ++i) {
        c.ids.push_back(vocab.id(text::to_lower(seq.tokens[i])));
        const auto it = std::lower_bound(tagset.begin(), tagset.end(), seq.labels[i]);
        if (it == tagset.end() || *it != seq.labels[i]) {
          c.labels.push_back(-1);
          if (unknown_labels) ++*unknown_labels;
        } else {
          c.labels.push_back(static_cast<int>(it - tagset.begin()));
        }
      }
      chunks.push_back(std::move(c));
    }
  }
  return chunks;
}

Matrix<float> head_logits(const Tagger& tagger, const Matrix<float>& hidden) {
  const auto& W = tagger.head_weight;
  const Eigen::Map<const Matrix<float>> w(W.values.data(), static_cast<Eigen::Index>(W.rows()),
                                          static_cast<Eigen::Index>(W.cols()));
  const Eigen::Map<const Eigen::RowVectorXf> b(tagger.head_bias.values.data(),
                                               static_cast<Eigen::Index>(tagger.head_bias.values.size()));
  Matrix<float> logits = hidden * w;
  logits.rowwise() += b;
  return logits;
}

int argmax_row(const Matrix<float>& m, Eigen::Index r) {
  Eigen::Index best = 0;
  for (Eigen::Index j = 1; j < m.cols(); ++j)
    if (m(r, j) > m(r, best)) best = j;
  return static_cast<int>(best);
}

std::vector<std::vector<std::string>> predict_chunks(const Tagger& tagger, const std::vector<Chunk>& chunks,
                                                     const TaggedCorpus& corpus) {
  std::vector<std::vector<std::string>> out(corpus.sequences.size());
  for (std::size_t s = 0; s < out.size(); ++s) out[s].resize(corpus.sequences[s].tokens.size());
  constexpr std::size_t kBatch = 32;
  for (std::size_t begin = 0; begin < chunks.size(); begin += kBatch) {
    const std::size_t end = std::min(chunks.size(), begin + kBatch);
    std::vector<std::vector<int>> seqs;
    for (std::size_t i = begin; i < end; ++i) seqs.push_back(chunks[i].ids);
    const TokenBatch batch = TokenBatch::from_sequences(seqs);
    const EncoderPass<float> pass(tagger.encoder, batch);
    const Matrix<float> logits = head_logits(tagger, pass.hidden());
    for (std::size_t i = begin; i < end; ++i) {
      const auto& c = chunks[i];
      for (std::size_t j = 0; j < c.ids.size(); ++j) {
        const int tag = argmax_row(logits, static_cast<Eigen::Index>((i - begin) * batch.cols + j));
        out[c.sequence][c.offset + j] = tagger.tagset[static_cast<std::size_t>(tag)];
      }
    }
  }
  return out;
}

double dev_metric(const TaggingScores& s) { return s.spans ? s.spans->f1 : s.accuracy; }

}  // namespace

FinetuneResult finetune_tagger(const EncoderParams& model, const Vocab& vocab, const TaggedCorpus& train,
                               const TaggedCorpus& dev, const TaggerTrainOptions& options) {
  if (options.epochs < 0) throw std::invalid_argument("epochs must be non-negative");
  if (options.batch_size == 0) throw std::invalid_argument("batch_size must be positive");
  if (train.sequences.empty()) throw std::invalid_argument("empty tagging train set");
  if (model.vocab_size != vocab.size()) throw std::invalid_argument("model and vocabulary sizes differ");

  FinetuneResult result;
  Tagger& tagger = result.tagger;
  tagger.encoder = model;
  tagger.scheme = train.scheme;
  tagger.tagset.assign(train.tagset.begin(), train.tagset.end());
  const std::size_t K = tagger.tagset.size();
  const auto d = static_cast<std::size_t>(model.preset.d_model);
  const auto max_len = static_cast<std::size_t>(model.preset.max_len);

  auto chunks = make_chunks(train, vocab, tagger.tagset, max_len, nullptr);
  std::vector<double> prior(K, 0.0);
  double total = 0.0;
  for (const auto& c : chunks)
    for (int l : c.labels) {
      prior[static_cast<std::size_t>(l)] += 1.0;
      total += 1.0;
    }
  tagger.head_weight = {"head.weight", {d, K}, std::vector<float>(d * K, 0.0f)};
  tagger.head_bias = {"head.bias", {K}, std::vector<float>(K)};
  for (std::size_t k = 0; k < K; ++k) tagger.head_bias.values[k] = static_cast<float>(std::log(prior[k] / total));

  const auto dev_chunks = make_chunks(dev, vocab, tagger.tagset, max_len, &result.unknown_dev_labels);
  if (options.epochs == 0) return result;

  AdamWConfig cfg;
  cfg.lr = options.lr;
  cfg.weight_decay = options.weight_decay;
  AdamW enc_opt(cfg), head_opt(cfg);
  Tagger working = tagger;
  std::vector<Tensor<float>> head = {working.head_weight, working.head_bias};
  double best = -std::numeric_limits<double>::infinity();

  for (int epoch = 1; epoch <= options.epochs; ++epoch) {
    Rng rng(mix_seed(options.seed, static_cast<std::uint64_t>(epoch)));
    std::shuffle(chunks.begin(), chunks.end(), rng);
    for (std::size_t begin = 0; begin < chunks.size(); begin += options.batch_size) {
      const std::size_t end = std::min(chunks.size(), begin + options.batch_size);
      std::vector<std::vector<int>> seqs;
      std::size_t n_tokens = 0;
      for (std::size_t i = begin; i < end; ++i) {
        seqs.push_back(chunks[i].ids);
        n_tokens += chunks[i].ids.size();
      }
      const TokenBatch batch = TokenBatch::from_sequences(seqs);
      working.head_weight = head[0];
      working.head_bias = head[1];
      const EncoderPass<float> pass(working.encoder, batch);
      const Matrix<float> logits = head_logits(working, pass.hidden());
      Matrix<float> dlogits = Matrix<float>::Zero(logits.rows(), logits.cols());
      std::vector<double> lp;
      for (std::size_t i = begin; i < end; ++i) {
        const auto& c = chunks[i];
        for (std::size_t j = 0; j < c.ids.size(); ++j) {
          const auto r = static_cast<Eigen::Index>((i - begin) * batch.cols + j);
          log_softmax(logits.row(r), lp);
          for (std::size_t k = 0; k < K; ++k)
            dlogits(r, static_cast<Eigen::Index>(k)) = static_cast<float>(std::exp(lp[k]) / static_cast<double>(n_tokens));
          dlogits(r, c.labels[j]) -= static_cast<float>(1.0 / static_cast<double>(n_tokens));
        }
      }
      std::vector<Tensor<float>> head_grads = {{"head.weight", {d, K}, std::vector<float>(d * K)},
                                               {"head.bias", {K}, std::vector<float>(K)}};
      Eigen::Map<Matrix<float>>(head_grads[0].values.data(), static_cast<Eigen::Index>(d),
                                static_cast<Eigen::Index>(K)).noalias() = pass.hidden().transpose() * dlogits;
      Eigen::Map<Eigen::RowVectorXf>(head_grads[1].values.data(), static_cast<Eigen::Index>(K)) =
          dlogits.colwise().sum();
      const Eigen::Map<const Matrix<float>> w(head[0].values.data(), static_cast<Eigen::Index>(d),
                                              static_cast<Eigen::Index>(K));
      const Matrix<float> dhidden = dlogits * w.transpose();
      EncoderParams grads = working.encoder.zeros_like();
      pass.backward(dhidden, grads);
      enc_opt.step(working.encoder, grads);
      head_opt.step(head, head_grads);
    }
    working.head_weight = head[0];
    working.head_bias = head[1];
    const double metric = dev_metric(score_tags(dev, predict_chunks(working, dev_chunks, dev)));
    result.dev_curve.push_back(metric);
    if (metric > best) {
      best = metric;
      result.best_epoch = epoch;
      tagger = working;
    }
  }
  return result;
}

std::vector<std::vector<std::string>> predict_tags(const Tagger& tagger, const Vocab& vocab,
                                                   const TaggedCorpus& corpus) {
  if (tagger.tagset.empty()) throw std::invalid_argument("tagger has no tags");
  const auto chunks = make_chunks(corpus, vocab, tagger.tagset,
                                  static_cast<std::size_t>(tagger.encoder.preset.max_len), nullptr);
  return predict_chunks(tagger, chunks, corpus);
}

std::vector<Span> extract_spans(const std::vector<std::string>& labels) {
  std::vector<Span> spans;
  bool open = false;
  Span cur;
  auto close = [&] {
    if (open) spans.push_back(cur);
    open = false;
  };
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const std::string& l = labels[i];
    if (l.size() > 2 && (l[0] == 'B' || l[0] == 'I') && l[1] == '-') {
      const std::string type = l.substr(2);
      if (l[0] == 'I' && open && cur.type == type) {
        cur.end = i;
        continue;
      }
      close();
      cur = {type, i, i};
      open = true;
    } else {
      close();
    }
  }
  close();
  return spans;
}

SpanScore span_f1(const std::vector<std::vector<std::string>>& gold,
                  const std::vector<std::vector<std::string>>& predicted) {
  if (gold.size() != predicted.size()) throw std::invalid_argument("sequence counts differ");
  SpanScore s;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (gold[i].size() != predicted[i].size()) throw std::invalid_argument("sequence lengths differ");
    auto g = extract_spans(gold[i]);
    auto p = extract_spans(predicted[i]);
    std::sort(g.begin(), g.end());
    std::sort(p.begin(), p.end());
    std::vector<Span> both;
    std::set_intersection(g.begin(), g.end(), p.begin(), p.end(), std::back_inserter(both));
    s.true_positives += both.size();
    s.gold += g.size();
    s.predicted += p.size();
  }
  s.precision = s.predicted ? static_cast<double>(s.true_positives) / static_cast<double>(s.predicted) : 0.0;
  s.recall = s.gold ? static_cast<double>(s.true_positives) / static_cast<double>(s.gold) : 0.0;
  s.f1 = s.precision + s.recall > 0.0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
  return s;
}

TaggingScores score_tags(const TaggedCorpus& gold, const std::vector<std::vector<std::string>>& predicted) {
  if (gold.sequences.size() != predicted.size()) throw std::invalid_argument("sequence counts differ");
  TaggingScores s;
  std::size_t correct = 0;
  std::vector<std::vector<std::string>> gold_labels;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const auto& g = gold.sequences[i].labels;
    if (g.size() != predicted[i].size()) throw std::invalid_argument("sequence lengths differ");
    for (std::size_t j = 0; j < g.size(); ++j) correct += g[j] == predicted[i][j];
    s.tokens += g.size();
    gold_labels.push_back(g);
  }
  s.accuracy = s.tokens ? static_cast<double>(correct) / static_cast<double>(s.tokens) : 0.0;
  if (gold.scheme == TagScheme::bio) s.spans = span_f1(gold_labels, predicted);
  return s;
}

TaggingScores evaluate_tagger(const Tagger& tagger, const Vocab& vocab, const TaggedCorpus& test) {
  return score_tags(test, predict_tags(tagger, vocab, test));
}

}  // namespace creole
