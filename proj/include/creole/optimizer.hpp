#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "creole/encoder.hpp"

namespace creole {

struct AdamWConfig {
  double lr = 3e-4;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// One decoupled-weight-decay Adam update on a flat parameter block:
//   w <- w * (1 - lr * wd)
//   m <- b1 m + (1 - b1) g ;  v <- b2 v + (1 - b2) g^2
//   w <- w - lr * m_hat / (sqrt(v_hat) + eps)
// with bias-corrected m_hat, v_hat at step `t` (1-based). Decay never touches
// the moments.
template <typename T>
void adamw_update(std::span<T> weights, std::span<const T> grads, std::span<T> m, std::span<T> v,
                  std::int64_t t, const AdamWConfig& config);

// Moment buffers for a list of tensors.
class AdamW {
 public:
  explicit AdamW(AdamWConfig config = {}) : config_(config) {}

  AdamWConfig& config() { return config_; }
  const AdamWConfig& config() const { return config_; }
  std::int64_t steps() const { return step_; }

  // Throws NumericError on non-finite gradients (before touching anything) and
  // std::invalid_argument when shapes differ from the first call.
  void step(std::vector<Tensor<float>>& params, const std::vector<Tensor<float>>& grads);
  void step(EncoderParams& params, const EncoderParams& grads) { step(params.tensors, grads.tensors); }

 private:
  AdamWConfig config_;
  std::int64_t step_ = 0;
  std::vector<std::vector<float>> m_, v_;
};

}  // namespace creole
