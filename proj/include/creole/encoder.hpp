#pragma once

// A small pre-layer-norm transformer encoder for masked language modeling,
// with hand-written backpropagation. Weights are single precision in
// production; every routine is also instantiated for double so gradients can
// be verified against central differences.

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace creole {

struct SizePreset {
  std::string name;
  int layers = 0;
  int d_model = 0;
  int heads = 0;
  int max_len = 0;

  static SizePreset tiny() { return {"tiny", 2, 128, 2, 64}; }
  static SizePreset small() { return {"small", 4, 256, 4, 64}; }
  static SizePreset base() { return {"base", 6, 512, 8, 128}; }
  static SizePreset by_name(std::string_view name);

  int head_dim() const { return d_model / heads; }
  void validate() const;
  bool operator==(const SizePreset&) const = default;
};

// Closed form: V*d + L*d + layers*(12*d^2 + 13*d) + 2*d + V.
std::size_t parameter_count(const SizePreset& preset, std::size_t vocab_size);

template <typename T>
struct Tensor {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<T> values;

  std::size_t rows() const { return shape.at(0); }
  std::size_t cols() const { return shape.size() > 1 ? shape[1] : 1; }
};

// Slots within one layer's block of tensors, in storage order.
enum class LayerTensor : std::size_t {
  ln1_gain, ln1_bias,
  query, query_bias, key, key_bias, value, value_bias, output, output_bias,
  ln2_gain, ln2_bias,
  ff_in, ff_in_bias, ff_out, ff_out_bias,
  count_
};

// Encoder weights in a fixed layout: token embeddings (V x d), position
// embeddings (L x d), per-layer blocks, final layer norm, output bias (V).
// The output projection is tied to the token embeddings. Matrices are stored
// row-major as (in x out), so a layer computes y = x W + b.
template <typename T>
struct Parameters {
  static constexpr std::size_t kTokenEmbedding = 0;
  static constexpr std::size_t kPositionEmbedding = 1;
  static constexpr std::size_t kPerLayer = static_cast<std::size_t>(LayerTensor::count_);

  SizePreset preset;
  std::size_t vocab_size = 0;
  std::uint64_t seed = 0;
  std::vector<Tensor<T>> tensors;

  static std::size_t layer_slot(int layer, LayerTensor which) {
    return 2 + static_cast<std::size_t>(layer) * kPerLayer + static_cast<std::size_t>(which);
  }
  std::size_t final_gain_slot() const { return 2 + static_cast<std::size_t>(preset.layers) * kPerLayer; }
  std::size_t final_bias_slot() const { return final_gain_slot() + 1; }
  std::size_t output_bias_slot() const { return final_gain_slot() + 2; }

  Tensor<T>& layer(int l, LayerTensor which) { return tensors[layer_slot(l, which)]; }
  const Tensor<T>& layer(int l, LayerTensor which) const { return tensors[layer_slot(l, which)]; }

  std::size_t count() const {
    std::size_t n = 0;
    for (const auto& t : tensors) n += t.values.size();
    return n;
  }
  bool all_finite() const;
  Parameters zeros_like() const;

  template <typename U>
  Parameters<U> cast() const {
    Parameters<U> out{preset, vocab_size, seed, {}};
    out.tensors.reserve(tensors.size());
    for (const auto& t : tensors)
      out.tensors.push_back({t.name, t.shape, std::vector<U>(t.values.begin(), t.values.end())});
    return out;
  }
};

using EncoderParams = Parameters<float>;

// Allocates the layout with zero values.
template <typename T>
Parameters<T> allocate_parameters(const SizePreset& preset, std::size_t vocab_size);

// Weights ~ N(0, 0.02), layer-norm gains 1, all biases 0. Deterministic per seed.
EncoderParams init_encoder(const SizePreset& preset, std::size_t vocab_size, std::uint64_t seed);

// A padded batch. attention(r, c) == 1 marks real tokens; padded slots hold
// Vocab::kPad and are never attended to.
struct TokenBatch {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<int> ids;
  std::vector<std::uint8_t> attention;

  static TokenBatch from_sequences(const std::vector<std::vector<int>>& sequences);
  int id(std::size_t r, std::size_t c) const { return ids[r * cols + c]; }
  int& id(std::size_t r, std::size_t c) { return ids[r * cols + c]; }
  bool real(std::size_t r, std::size_t c) const { return attention[r * cols + c] != 0; }
  std::size_t length(std::size_t r) const;
};

struct MaskedPosition {
  std::size_t row = 0;
  std::size_t col = 0;
  int original = 0;
};

// Input ids with some positions replaced, plus the originals to predict there.
struct MaskedBatch {
  TokenBatch tokens;
  std::vector<MaskedPosition> masked;

  // Throws unless every masked position is a real token, positions are unique
  // and every row has at least one.
  void validate() const;
  std::vector<std::size_t> masks_per_row() const;
};

// Test hook for the gradient checker's negative control.
struct FaultInjection {
  bool drop_attention_softmax_jacobian = false;
};

template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Forward pass through embeddings, layers and the final layer norm, keeping
// what the backward pass needs. `params` and `batch` must outlive the pass.
template <typename T>
class EncoderPass {
 public:
  EncoderPass(const Parameters<T>& params, const TokenBatch& batch, FaultInjection fault = {});
  ~EncoderPass();
  EncoderPass(EncoderPass&&) noexcept;
  EncoderPass& operator=(EncoderPass&&) noexcept;

  // (rows * cols) x d final hidden states, row index r * cols + c.
  const Matrix<T>& hidden() const { return hidden_; }
  const TokenBatch& batch() const { return *batch_; }

  // Accumulates d(objective)/d(params) into `grads` given d(objective)/d(hidden).
  void backward(const Matrix<T>& d_hidden, Parameters<T>& grads) const;

 private:
  struct Cache;
  const Parameters<T>* params_;
  const TokenBatch* batch_;
  FaultInjection fault_;
  std::unique_ptr<Cache> cache_;
  Matrix<T> hidden_;
};

// Full log-softmax output, rows x cols x vocab, accumulated in double.
struct LogProbTensor {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t vocab = 0;
  std::vector<double> values;

  double at(std::size_t r, std::size_t c, std::size_t v) const {
    return values[(r * cols + c) * vocab + v];
  }
};

template <typename T>
LogProbTensor forward_mlm(const Parameters<T>& params, const TokenBatch& batch);

// Output logits (pre-softmax) for selected hidden rows.
template <typename T>
Matrix<T> output_logits(const Parameters<T>& params, const Matrix<T>& hidden_rows);

// Masked-LM loss for one batch: forward on construction, then any number of
// weighted backward passes. Per-example loss is the mean cross-entropy over
// that example's masked positions.
template <typename T>
class MlmStep {
 public:
  MlmStep(const Parameters<T>& params, const MaskedBatch& batch, FaultInjection fault = {});

  const std::vector<double>& example_losses() const { return losses_; }
  const std::vector<std::size_t>& masks_per_example() const { return mask_counts_; }

  // Gradient of sum_b weights[b] * loss_b.
  Parameters<T> gradient(std::span<const double> example_weights) const;

 private:
  const Parameters<T>* params_;
  const MaskedBatch* batch_;
  EncoderPass<T> pass_;
  Matrix<T> masked_hidden_;
  Matrix<T> probs_;
  std::vector<double> losses_;
  std::vector<std::size_t> mask_counts_;
};

template <typename T>
struct LossAndGrad {
  std::vector<double> losses;
  Parameters<T> grads;  // of the summed per-example losses
};

template <typename T>
LossAndGrad<T> loss_and_grad(const Parameters<T>& params, const MaskedBatch& batch,
                             FaultInjection fault = {});

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst_tensor;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
};

// Compares analytic gradients of the summed batch loss against central
// differences at n_coords uniformly sampled coordinates, all in double.
// Relative error is |a - n| / max(|a|, |n|, 1e-10).
GradCheckResult grad_check(const EncoderParams& params, const MaskedBatch& batch, double epsilon,
                           std::size_t n_coords, std::uint64_t seed, FaultInjection fault = {});

// Mean of final hidden states over each row's real tokens (rows x d).
template <typename T>
Matrix<T> mean_pooled(const EncoderPass<T>& pass);

}  // namespace creole
