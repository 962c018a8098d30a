#include "creole/divergence.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include "creole/rng.hpp"
#include "creole/table.hpp"

namespace creole {

EncodedSentences encode_sentences(const EncoderParams& params, const Vocab& vocab, const Corpus& corpus,
                                  std::size_t batch_size) {
  if (params.vocab_size != vocab.size()) throw std::invalid_argument("model and vocabulary sizes differ");
  EncodedSentences out;
  std::vector<std::vector<int>> pending;
  auto flush = [&] {
    if (pending.empty()) return;
    const TokenBatch batch = TokenBatch::from_sequences(pending);
    const EncoderPass<float> pass(params, batch);
    const Matrix<float> pooled = mean_pooled(pass);
    for (Eigen::Index r = 0; r < pooled.rows(); ++r)
      out.vectors.emplace_back(pooled.row(r).begin(), pooled.row(r).end());
    pending.clear();
  };
  for (const auto& s : corpus.sentences()) {
    auto ids = tokenize(vocab, s.text, static_cast<std::size_t>(params.preset.max_len));
    if (ids.empty()) {
      ++out.skipped;
      continue;
    }
    pending.push_back(std::move(ids));
    if (pending.size() >= std::max<std::size_t>(batch_size, 1)) flush();
  }
  flush();
  return out;
}

void PadOptions::validate() const {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw std::invalid_argument("train_fraction must be in (0, 1)");
  if (!(lambda >= 0.0)) throw std::invalid_argument("lambda must be non-negative");
  if (epochs < 1) throw std::invalid_argument("epochs must be positive");
  if (!(lr > 0.0)) throw std::invalid_argument("lr must be positive");
  if (min_per_domain < 2) throw std::invalid_argument("min_per_domain must be at least 2");
}

double pad_from_error(double error) {
  if (!(error >= 0.0)) throw std::invalid_argument("error must be non-negative");
  return 2.0 * (1.0 - 2.0 * std::min(error, 0.5));
}

double holdout_error(const std::vector<std::vector<double>>& train_x, const std::vector<int>& train_y,
                     const std::vector<std::vector<double>>& test_x, const std::vector<int>& test_y,
                     const PadOptions& options, std::uint64_t seed) {
  options.validate();
  if (train_x.empty() || test_x.empty()) throw std::invalid_argument("empty train or test set");
  if (train_x.size() != train_y.size() || test_x.size() != test_y.size())
    throw std::invalid_argument("one label per example required");
  const std::size_t dim = train_x.front().size();
  for (const auto* set : {&train_x, &test_x})
    for (const auto& x : *set)
      if (x.size() != dim) throw std::invalid_argument("feature dimensions differ");

  std::vector<double> mean(dim, 0.0), scale(dim, 0.0);
  for (const auto& x : train_x)
    for (std::size_t j = 0; j < dim; ++j) mean[j] += x[j];
  for (auto& m : mean) m /= static_cast<double>(train_x.size());
  for (const auto& x : train_x)
    for (std::size_t j = 0; j < dim; ++j) scale[j] += (x[j] - mean[j]) * (x[j] - mean[j]);
  for (auto& s : scale) {
    s = std::sqrt(s / static_cast<double>(train_x.size()));
    if (!(s > 0.0)) s = 1.0;
  }
  auto standardize = [&](const std::vector<double>& x) {
    std::vector<double> z(dim);
    for (std::size_t j = 0; j < dim; ++j) z[j] = (x[j] - mean[j]) / scale[j];
    return z;
  };
  std::vector<std::vector<double>> xs;
  for (const auto& x : train_x) xs.push_back(standardize(x));

  std::vector<double> w(dim, 0.0);
  double b = 0.0;
  std::vector<std::size_t> order(xs.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  std::size_t t = 0;
  const double n = static_cast<double>(xs.size());
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t i : order) {
      const double lr = options.lr / (1.0 + static_cast<double>(t++) / n);
      const double y = train_y[i] ? 1.0 : -1.0;
      double score = b;
      for (std::size_t j = 0; j < dim; ++j) score += w[j] * xs[i][j];
      const double shrink = 1.0 - lr * options.lambda;
      for (auto& wj : w) wj *= shrink;
      if (y * score < 1.0) {
        for (std::size_t j = 0; j < dim; ++j) w[j] += lr * y * xs[i][j];
        b += lr * y;
      }
    }
  }

  std::size_t wrong = 0;
  for (std::size_t i = 0; i < test_x.size(); ++i) {
    const auto z = standardize(test_x[i]);
    double score = b;
    for (std::size_t j = 0; j < dim; ++j) score += w[j] * z[j];
    // A zero score claims neither domain and counts as an error.
    const bool correct = test_y[i] ? score > 0.0 : score < 0.0;
    wrong += !correct;
  }
  return static_cast<double>(wrong) / static_cast<double>(test_x.size());
}

PadResult proxy_a_distance(std::vector<std::vector<double>> domain1, std::vector<std::vector<double>> domain2,
                           std::uint64_t seed, const PadOptions& options) {
  options.validate();
  const std::size_t n = std::min(domain1.size(), domain2.size());
  if (n < options.min_per_domain)
    throw std::invalid_argument("each domain needs at least " + std::to_string(options.min_per_domain) +
                                " encoded sentences, got " + std::to_string(n));
  Rng r1(mix_seed(seed, 1)), r2(mix_seed(seed, 2));
  std::shuffle(domain1.begin(), domain1.end(), r1);
  std::shuffle(domain2.begin(), domain2.end(), r2);
  domain1.resize(n);
  domain2.resize(n);

  const auto n_train = static_cast<std::size_t>(std::llround(options.train_fraction * static_cast<double>(n)));
  if (n_train == 0 || n_train >= n) throw std::invalid_argument("train/test split leaves an empty side");
  std::vector<std::vector<double>> train_x, test_x;
  std::vector<int> train_y, test_y;
  for (int label = 0; label < 2; ++label) {
    auto& d = label ? domain2 : domain1;
    for (std::size_t i = 0; i < n; ++i) {
      auto& xs = i < n_train ? train_x : test_x;
      auto& ys = i < n_train ? train_y : test_y;
      xs.push_back(std::move(d[i]));
      ys.push_back(label);
    }
  }
  PadResult result;
  result.seed = seed;
  result.per_domain = n;
  result.train_size = train_x.size();
  result.test_size = test_x.size();
  result.error = holdout_error(train_x, train_y, test_x, test_y, options, mix_seed(seed, 3));
  result.pad = pad_from_error(result.error);
  return result;
}

PadResult proxy_a_distance(const Corpus& domain1, const Corpus& domain2, const EncoderParams& params,
                           const Vocab& vocab, std::uint64_t seed, const PadOptions& options) {
  auto a = encode_sentences(params, vocab, domain1);
  auto b = encode_sentences(params, vocab, domain2);
  return proxy_a_distance(std::move(a.vectors), std::move(b.vectors), seed, options);
}

void write_pad_tsv(std::ostream& out, const std::vector<PadRow>& rows) {
  Table t;
  t.header = {"language", "domain-1", "domain-2", "PAD"};
  for (const auto& r : rows) t.add_row({r.language, r.domain1, r.domain2, format_fixed(r.pad, 4)});
  t.write_tsv(out);
}

}  // namespace creole
