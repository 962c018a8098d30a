#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "creole/corpus.hpp"
#include "creole/encoder.hpp"
#include "creole/vocab.hpp"

namespace creole {

struct EncodedSentences {
  std::vector<std::vector<double>> vectors;  // mean-pooled final hidden states
  std::size_t skipped = 0;                   // empty after tokenization
};

EncodedSentences encode_sentences(const EncoderParams& params, const Vocab& vocab, const Corpus& corpus,
                                  std::size_t batch_size = 32);

struct PadOptions {
  double train_fraction = 0.8;
  double lambda = 1e-3;   // L2 strength of the linear SVM
  int epochs = 200;
  double lr = 0.1;        // lr_t = lr / (1 + t / n_train), t counts updates
  std::size_t min_per_domain = 40;

  void validate() const;
};

// PAD = 2 (1 - 2 eps), with eps clamped to at most 0.5.
double pad_from_error(double error);

// Linear SVM (hinge loss + L2) trained by seeded SGD on standardized features.
// Labels are 0/1; returns the held-out classification error.
double holdout_error(const std::vector<std::vector<double>>& train_x, const std::vector<int>& train_y,
                     const std::vector<std::vector<double>>& test_x, const std::vector<int>& test_y,
                     const PadOptions& options, std::uint64_t seed);

struct PadResult {
  double error = 0.0;
  double pad = 0.0;
  std::size_t per_domain = 0;  // after balancing
  std::size_t train_size = 0;
  std::size_t test_size = 0;
  std::uint64_t seed = 0;
};

// Balances the domains by seeded downsampling, splits each domain
// train/test, and trains the domain classifier.
PadResult proxy_a_distance(std::vector<std::vector<double>> domain1, std::vector<std::vector<double>> domain2,
                           std::uint64_t seed, const PadOptions& options = {});

PadResult proxy_a_distance(const Corpus& domain1, const Corpus& domain2, const EncoderParams& params,
                           const Vocab& vocab, std::uint64_t seed, const PadOptions& options = {});

struct PadRow {
  std::string language;
  std::string domain1;
  std::string domain2;
  double pad = 0.0;
};

// Columns: language, domain-1, domain-2, PAD.
void write_pad_tsv(std::ostream& out, const std::vector<PadRow>& rows);

}  // namespace creole
