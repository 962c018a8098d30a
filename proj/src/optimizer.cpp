#include "creole/optimizer.hpp"

#include <cmath>
#include <stdexcept>

#include "creole/error.hpp"

namespace creole {

template <typename T>
void adamw_update(std::span<T> weights, std::span<const T> grads, std::span<T> m, std::span<T> v,
                  std::int64_t t, const AdamWConfig& c) {
  if (grads.size() != weights.size() || m.size() != weights.size() || v.size() != weights.size())
    throw std::invalid_argument("optimizer shape mismatch");
  if (t < 1) throw std::invalid_argument("optimizer step count is 1-based");
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(t));
  const double decay = 1.0 - c.lr * c.weight_decay;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double g = static_cast<double>(grads[i]);
    const double mi = c.beta1 * static_cast<double>(m[i]) + (1.0 - c.beta1) * g;
    const double vi = c.beta2 * static_cast<double>(v[i]) + (1.0 - c.beta2) * g * g;
    m[i] = static_cast<T>(mi);
    v[i] = static_cast<T>(vi);
    const double w = static_cast<double>(weights[i]) * decay;
    weights[i] = static_cast<T>(w - c.lr * (mi / bc1) / (std::sqrt(vi / bc2) + c.eps));
  }
}

template void adamw_update<float>(std::span<float>, std::span<const float>, std::span<float>,
                                  std::span<float>, std::int64_t, const AdamWConfig&);
template void adamw_update<double>(std::span<double>, std::span<const double>, std::span<double>,
                                   std::span<double>, std::int64_t, const AdamWConfig&);

void AdamW::step(std::vector<Tensor<float>>& params, const std::vector<Tensor<float>>& grads) {
  if (params.size() != grads.size()) throw std::invalid_argument("optimizer tensor count mismatch");
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (grads[i].values.size() != params[i].values.size())
      throw std::invalid_argument("optimizer shape mismatch for '" + params[i].name + "'");
    for (float g : grads[i].values)
      if (!std::isfinite(g)) throw NumericError("non-finite gradient in '" + grads[i].name + "'");
  }
  if (m_.empty()) {
    for (const auto& p : params) {
      m_.emplace_back(p.values.size(), 0.0f);
      v_.emplace_back(p.values.size(), 0.0f);
    }
  } else if (m_.size() != params.size()) {
    throw std::invalid_argument("optimizer state was built for a different parameter list");
  }
  ++step_;
  for (std::size_t i = 0; i < params.size(); ++i)
    adamw_update<float>(params[i].values, grads[i].values, m_[i], v_[i], step_, config_);
}

}  // namespace creole
