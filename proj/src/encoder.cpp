#include "creole/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <set>
#include <stdexcept>

#include "creole/error.hpp"
#include "creole/rng.hpp"
#include "creole/vocab.hpp"

namespace creole {

namespace {

constexpr double kLayerNormEps = 1e-5;

template <typename T>
using RowVec = Eigen::Matrix<T, 1, Eigen::Dynamic>;

template <typename T>
Eigen::Map<const Matrix<T>> mat(const Tensor<T>& t) {
  return {t.values.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols())};
}
template <typename T>
Eigen::Map<Matrix<T>> mat(Tensor<T>& t) {
  return {t.values.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols())};
}
template <typename T>
Eigen::Map<const RowVec<T>> vec(const Tensor<T>& t) {
  return {t.values.data(), static_cast<Eigen::Index>(t.values.size())};
}
template <typename T>
Eigen::Map<RowVec<T>> vec(Tensor<T>& t) {
  return {t.values.data(), static_cast<Eigen::Index>(t.values.size())};
}

// y = x W + b, row-wise.
template <typename T>
Matrix<T> affine(const Matrix<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  Matrix<T> y = x * mat(w);
  y.rowwise() += vec(b);
  return y;
}

template <typename T>
void affine_backward(const Matrix<T>& x, const Matrix<T>& dy, Tensor<T>& dw, Tensor<T>& db) {
  mat(dw).noalias() += x.transpose() * dy;
  vec(db) += dy.colwise().sum();
}

template <typename T>
struct LayerNormCache {
  Matrix<T> xhat;
  std::vector<T> inv_std;
};

template <typename T>
Matrix<T> layer_norm(const Matrix<T>& x, const Tensor<T>& gain, const Tensor<T>& bias,
                     LayerNormCache<T>& cache) {
  const Eigen::Index n = x.rows(), d = x.cols();
  cache.xhat.resize(n, d);
  cache.inv_std.resize(static_cast<std::size_t>(n));
  for (Eigen::Index r = 0; r < n; ++r) {
    double mean = 0.0;
    for (Eigen::Index c = 0; c < d; ++c) mean += static_cast<double>(x(r, c));
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (Eigen::Index c = 0; c < d; ++c) {
      const double dv = static_cast<double>(x(r, c)) - mean;
      var += dv * dv;
    }
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
    cache.inv_std[static_cast<std::size_t>(r)] = static_cast<T>(inv);
    for (Eigen::Index c = 0; c < d; ++c)
      cache.xhat(r, c) = static_cast<T>((static_cast<double>(x(r, c)) - mean) * inv);
  }
  Matrix<T> y = cache.xhat.array().rowwise() * vec(gain).array();
  y.rowwise() += vec(bias);
  return y;
}

template <typename T>
Matrix<T> layer_norm_backward(const Matrix<T>& dy, const LayerNormCache<T>& cache,
                              const Tensor<T>& gain, Tensor<T>& dgain, Tensor<T>& dbias) {
  vec(dgain) += (dy.array() * cache.xhat.array()).colwise().sum().matrix();
  vec(dbias) += dy.colwise().sum();
  const Matrix<T> dxhat = dy.array().rowwise() * vec(gain).array();
  const Eigen::Index n = dy.rows(), d = dy.cols();
  Matrix<T> dx(n, d);
  for (Eigen::Index r = 0; r < n; ++r) {
    double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
    for (Eigen::Index c = 0; c < d; ++c) {
      mean_dxhat += static_cast<double>(dxhat(r, c));
      mean_dxhat_xhat += static_cast<double>(dxhat(r, c)) * static_cast<double>(cache.xhat(r, c));
    }
    mean_dxhat /= static_cast<double>(d);
    mean_dxhat_xhat /= static_cast<double>(d);
    const double inv = static_cast<double>(cache.inv_std[static_cast<std::size_t>(r)]);
    for (Eigen::Index c = 0; c < d; ++c)
      dx(r, c) = static_cast<T>(inv * (static_cast<double>(dxhat(r, c)) - mean_dxhat -
                                       static_cast<double>(cache.xhat(r, c)) * mean_dxhat_xhat));
  }
  return dx;
}

template <typename T>
T gelu(T u) {
  return static_cast<T>(0.5) * u * (static_cast<T>(1) + std::erf(u * static_cast<T>(std::numbers::sqrt2 / 2)));
}

template <typename T>
T gelu_grad(T u) {
  const T cdf = static_cast<T>(0.5) * (static_cast<T>(1) + std::erf(u * static_cast<T>(std::numbers::sqrt2 / 2)));
  const T pdf = std::exp(static_cast<T>(-0.5) * u * u) * static_cast<T>(0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2);
  return cdf + u * pdf;
}

// Row-wise log-softmax of `logits` in double; optionally also the softmax.
template <typename T>
double log_softmax_row(const Matrix<T>& logits, Eigen::Index r, std::vector<double>& out) {
  const Eigen::Index v = logits.cols();
  double mx = -std::numeric_limits<double>::infinity();
  for (Eigen::Index j = 0; j < v; ++j) mx = std::max(mx, static_cast<double>(logits(r, j)));
  double z = 0.0;
  for (Eigen::Index j = 0; j < v; ++j) z += std::exp(static_cast<double>(logits(r, j)) - mx);
  const double lse = mx + std::log(z);
  out.resize(static_cast<std::size_t>(v));
  for (Eigen::Index j = 0; j < v; ++j) out[static_cast<std::size_t>(j)] = static_cast<double>(logits(r, j)) - lse;
  return lse;
}

}  // namespace

SizePreset SizePreset::by_name(std::string_view name) {
  if (name == "tiny") return tiny();
  if (name == "small") return small();
  if (name == "base") return base();
  throw std::invalid_argument("unknown size preset '" + std::string(name) + "'");
}

void SizePreset::validate() const {
  if (layers < 1 || d_model < 1 || heads < 1 || max_len < 1 || d_model % heads != 0)
    throw std::invalid_argument("invalid size preset '" + name + "'");
}

std::size_t parameter_count(const SizePreset& p, std::size_t vocab_size) {
  const std::size_t d = static_cast<std::size_t>(p.d_model);
  return vocab_size * d + static_cast<std::size_t>(p.max_len) * d +
         static_cast<std::size_t>(p.layers) * (12 * d * d + 13 * d) + 2 * d + vocab_size;
}

template <typename T>
bool Parameters<T>::all_finite() const {
  for (const auto& t : tensors)
    for (T v : t.values)
      if (!std::isfinite(v)) return false;
  return true;
}

template <typename T>
Parameters<T> Parameters<T>::zeros_like() const {
  Parameters out{preset, vocab_size, seed, {}};
  out.tensors.reserve(tensors.size());
  for (const auto& t : tensors) out.tensors.push_back({t.name, t.shape, std::vector<T>(t.values.size(), T{0})});
  return out;
}

template <typename T>
Parameters<T> allocate_parameters(const SizePreset& preset, std::size_t vocab_size) {
  preset.validate();
  if (vocab_size < 4) throw std::invalid_argument("vocabulary size must be >= 4");
  const std::size_t d = static_cast<std::size_t>(preset.d_model);
  Parameters<T> p{preset, vocab_size, 0, {}};
  auto add = [&](std::string name, std::vector<std::size_t> shape) {
    std::size_t n = 1;
    for (auto s : shape) n *= s;
    p.tensors.push_back({std::move(name), std::move(shape), std::vector<T>(n, T{0})});
  };
  add("embeddings.token", {vocab_size, d});
  add("embeddings.position", {static_cast<std::size_t>(preset.max_len), d});
  for (int l = 0; l < preset.layers; ++l) {
    const std::string pre = "layer." + std::to_string(l) + ".";
    add(pre + "ln1.gain", {d});
    add(pre + "ln1.bias", {d});
    add(pre + "attn.query", {d, d});
    add(pre + "attn.query_bias", {d});
    add(pre + "attn.key", {d, d});
    add(pre + "attn.key_bias", {d});
    add(pre + "attn.value", {d, d});
    add(pre + "attn.value_bias", {d});
    add(pre + "attn.output", {d, d});
    add(pre + "attn.output_bias", {d});
    add(pre + "ln2.gain", {d});
    add(pre + "ln2.bias", {d});
    add(pre + "ff.in", {d, 4 * d});
    add(pre + "ff.in_bias", {4 * d});
    add(pre + "ff.out", {4 * d, d});
    add(pre + "ff.out_bias", {d});
  }
  add("final_ln.gain", {d});
  add("final_ln.bias", {d});
  add("output.bias", {vocab_size});
  return p;
}

EncoderParams init_encoder(const SizePreset& preset, std::size_t vocab_size, std::uint64_t seed) {
  EncoderParams p = allocate_parameters<float>(preset, vocab_size);
  p.seed = seed;
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 0.02);
  for (auto& t : p.tensors) {
    if (t.name.ends_with(".gain")) {
      std::fill(t.values.begin(), t.values.end(), 1.0f);
    } else if (t.shape.size() == 2) {
      for (auto& v : t.values) v = static_cast<float>(normal(rng));
    }
  }
  return p;
}

TokenBatch TokenBatch::from_sequences(const std::vector<std::vector<int>>& sequences) {
  TokenBatch b;
  b.rows = sequences.size();
  for (const auto& s : sequences) b.cols = std::max(b.cols, s.size());
  b.ids.assign(b.rows * b.cols, Vocab::kPad);
  b.attention.assign(b.rows * b.cols, 0);
  for (std::size_t r = 0; r < b.rows; ++r)
    for (std::size_t c = 0; c < sequences[r].size(); ++c) {
      b.ids[r * b.cols + c] = sequences[r][c];
      b.attention[r * b.cols + c] = 1;
    }
  return b;
}

std::size_t TokenBatch::length(std::size_t r) const {
  std::size_t n = 0;
  for (std::size_t c = 0; c < cols; ++c) n += real(r, c);
  return n;
}

void MaskedBatch::validate() const {
  std::set<std::pair<std::size_t, std::size_t>> seen;
  for (const auto& m : masked) {
    if (m.row >= tokens.rows || m.col >= tokens.cols || !tokens.real(m.row, m.col))
      throw std::invalid_argument("masked position does not index a real token");
    if (!seen.emplace(m.row, m.col).second) throw std::invalid_argument("duplicate masked position");
  }
  for (auto n : masks_per_row())
    if (n == 0) throw std::invalid_argument("example with zero masked positions");
}

std::vector<std::size_t> MaskedBatch::masks_per_row() const {
  std::vector<std::size_t> counts(tokens.rows, 0);
  for (const auto& m : masked) ++counts.at(m.row);
  return counts;
}

// ---------------------------------------------------------------------------
// Encoder pass

template <typename T>
struct EncoderPass<T>::Cache {
  struct Layer {
    LayerNormCache<T> ln1, ln2;
    Matrix<T> h1, q, k, v, ctx, h2, u, g;
    std::vector<Matrix<T>> attn;  // rows * heads matrices of cols x cols
  };
  std::vector<Layer> layers;
  LayerNormCache<T> final_ln;
};

template <typename T>
EncoderPass<T>::~EncoderPass() = default;
template <typename T>
EncoderPass<T>::EncoderPass(EncoderPass&&) noexcept = default;
template <typename T>
EncoderPass<T>& EncoderPass<T>::operator=(EncoderPass&&) noexcept = default;

template <typename T>
EncoderPass<T>::EncoderPass(const Parameters<T>& params, const TokenBatch& batch, FaultInjection fault)
    : params_(&params), batch_(&batch), fault_(fault), cache_(std::make_unique<Cache>()) {
  const SizePreset& pre = params.preset;
  const auto B = static_cast<Eigen::Index>(batch.rows);
  const auto L = static_cast<Eigen::Index>(batch.cols);
  const auto d = static_cast<Eigen::Index>(pre.d_model);
  const auto H = static_cast<Eigen::Index>(pre.heads);
  const Eigen::Index dh = d / H;
  if (L > pre.max_len) throw std::invalid_argument("sequence longer than the preset's max_len");
  if (batch.ids.size() != batch.rows * batch.cols || batch.attention.size() != batch.ids.size())
    throw std::invalid_argument("malformed token batch");

  const auto E = mat(params.tensors[Parameters<T>::kTokenEmbedding]);
  const auto P = mat(params.tensors[Parameters<T>::kPositionEmbedding]);
  Matrix<T> x(B * L, d);
  for (Eigen::Index r = 0; r < B; ++r)
    for (Eigen::Index c = 0; c < L; ++c) {
      const int id = batch.id(static_cast<std::size_t>(r), static_cast<std::size_t>(c));
      if (id < 0 || static_cast<std::size_t>(id) >= params.vocab_size)
        throw std::invalid_argument("token id out of vocabulary range");
      x.row(r * L + c) = E.row(id) + P.row(c);
    }

  const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));
  cache_->layers.resize(static_cast<std::size_t>(pre.layers));
  std::vector<double> row;
  for (int l = 0; l < pre.layers; ++l) {
    auto& lc = cache_->layers[static_cast<std::size_t>(l)];
    auto W = [&](LayerTensor w) -> const Tensor<T>& { return params.layer(l, w); };

    lc.h1 = layer_norm(x, W(LayerTensor::ln1_gain), W(LayerTensor::ln1_bias), lc.ln1);
    lc.q = affine(lc.h1, W(LayerTensor::query), W(LayerTensor::query_bias));
    lc.k = affine(lc.h1, W(LayerTensor::key), W(LayerTensor::key_bias));
    lc.v = affine(lc.h1, W(LayerTensor::value), W(LayerTensor::value_bias));
    lc.ctx.setZero(B * L, d);
    lc.attn.resize(static_cast<std::size_t>(B * H));
    for (Eigen::Index b = 0; b < B; ++b) {
      for (Eigen::Index h = 0; h < H; ++h) {
        Matrix<T> s = lc.q.block(b * L, h * dh, L, dh) * lc.k.block(b * L, h * dh, L, dh).transpose();
        s *= scale;
        Matrix<T>& a = lc.attn[static_cast<std::size_t>(b * H + h)];
        a.setZero(L, L);
        for (Eigen::Index i = 0; i < L; ++i) {
          double mx = -std::numeric_limits<double>::infinity();
          for (Eigen::Index j = 0; j < L; ++j)
            if (batch.real(static_cast<std::size_t>(b), static_cast<std::size_t>(j)))
              mx = std::max(mx, static_cast<double>(s(i, j)));
          if (!std::isfinite(mx)) continue;  // no real keys in this row
          double z = 0.0;
          for (Eigen::Index j = 0; j < L; ++j)
            if (batch.real(static_cast<std::size_t>(b), static_cast<std::size_t>(j)))
              z += std::exp(static_cast<double>(s(i, j)) - mx);
          for (Eigen::Index j = 0; j < L; ++j)
            if (batch.real(static_cast<std::size_t>(b), static_cast<std::size_t>(j)))
              a(i, j) = static_cast<T>(std::exp(static_cast<double>(s(i, j)) - mx) / z);
        }
        lc.ctx.block(b * L, h * dh, L, dh).noalias() = a * lc.v.block(b * L, h * dh, L, dh);
      }
    }
    x += affine(lc.ctx, W(LayerTensor::output), W(LayerTensor::output_bias));

    lc.h2 = layer_norm(x, W(LayerTensor::ln2_gain), W(LayerTensor::ln2_bias), lc.ln2);
    lc.u = affine(lc.h2, W(LayerTensor::ff_in), W(LayerTensor::ff_in_bias));
    lc.g = lc.u.unaryExpr([](T u) { return gelu(u); });
    x += affine(lc.g, W(LayerTensor::ff_out), W(LayerTensor::ff_out_bias));
  }
  hidden_ = layer_norm(x, params.tensors[params.final_gain_slot()],
                       params.tensors[params.final_bias_slot()], cache_->final_ln);
  if (!hidden_.allFinite())
    throw NumericError("non-finite activation in encoder forward pass");
}

template <typename T>
void EncoderPass<T>::backward(const Matrix<T>& d_hidden, Parameters<T>& grads) const {
  const Parameters<T>& params = *params_;
  const TokenBatch& batch = *batch_;
  const SizePreset& pre = params.preset;
  const auto B = static_cast<Eigen::Index>(batch.rows);
  const auto L = static_cast<Eigen::Index>(batch.cols);
  const auto d = static_cast<Eigen::Index>(pre.d_model);
  const auto H = static_cast<Eigen::Index>(pre.heads);
  const Eigen::Index dh = d / H;
  const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));
  if (d_hidden.rows() != B * L || d_hidden.cols() != d)
    throw std::invalid_argument("hidden gradient has the wrong shape");

  Matrix<T> dx = layer_norm_backward(d_hidden, cache_->final_ln, params.tensors[params.final_gain_slot()],
                                     grads.tensors[params.final_gain_slot()],
                                     grads.tensors[params.final_bias_slot()]);

  for (int l = pre.layers - 1; l >= 0; --l) {
    const auto& lc = cache_->layers[static_cast<std::size_t>(l)];
    auto W = [&](LayerTensor w) -> const Tensor<T>& { return params.layer(l, w); };
    auto G = [&](LayerTensor w) -> Tensor<T>& { return grads.layer(l, w); };

    // Feed-forward block: x_out = x_mid + gelu(LN2(x_mid) W1 + b1) W2 + b2.
    affine_backward(lc.g, dx, G(LayerTensor::ff_out), G(LayerTensor::ff_out_bias));
    Matrix<T> du = dx * mat(W(LayerTensor::ff_out)).transpose();
    du.array() *= lc.u.unaryExpr([](T u) { return gelu_grad(u); }).array();
    affine_backward(lc.h2, du, G(LayerTensor::ff_in), G(LayerTensor::ff_in_bias));
    const Matrix<T> dh2 = du * mat(W(LayerTensor::ff_in)).transpose();
    dx += layer_norm_backward(dh2, lc.ln2, W(LayerTensor::ln2_gain), G(LayerTensor::ln2_gain),
                              G(LayerTensor::ln2_bias));

    // Attention block: x_mid = x_in + Attn(LN1(x_in)).
    affine_backward(lc.ctx, dx, G(LayerTensor::output), G(LayerTensor::output_bias));
    const Matrix<T> dctx = dx * mat(W(LayerTensor::output)).transpose();
    Matrix<T> dq = Matrix<T>::Zero(B * L, d), dk = Matrix<T>::Zero(B * L, d), dv = Matrix<T>::Zero(B * L, d);
    for (Eigen::Index b = 0; b < B; ++b) {
      for (Eigen::Index h = 0; h < H; ++h) {
        const Matrix<T>& a = lc.attn[static_cast<std::size_t>(b * H + h)];
        const auto dctx_bh = dctx.block(b * L, h * dh, L, dh);
        const Matrix<T> da = dctx_bh * lc.v.block(b * L, h * dh, L, dh).transpose();
        dv.block(b * L, h * dh, L, dh).noalias() = a.transpose() * dctx_bh;
        Matrix<T> ds(L, L);
        for (Eigen::Index i = 0; i < L; ++i) {
          double dot = 0.0;
          if (!fault_.drop_attention_softmax_jacobian)
            for (Eigen::Index j = 0; j < L; ++j)
              dot += static_cast<double>(a(i, j)) * static_cast<double>(da(i, j));
          for (Eigen::Index j = 0; j < L; ++j)
            ds(i, j) = static_cast<T>(static_cast<double>(a(i, j)) * (static_cast<double>(da(i, j)) - dot));
        }
        ds *= scale;
        dq.block(b * L, h * dh, L, dh).noalias() = ds * lc.k.block(b * L, h * dh, L, dh);
        dk.block(b * L, h * dh, L, dh).noalias() = ds.transpose() * lc.q.block(b * L, h * dh, L, dh);
      }
    }
    affine_backward(lc.h1, dq, G(LayerTensor::query), G(LayerTensor::query_bias));
    affine_backward(lc.h1, dk, G(LayerTensor::key), G(LayerTensor::key_bias));
    affine_backward(lc.h1, dv, G(LayerTensor::value), G(LayerTensor::value_bias));
    Matrix<T> dh1 = dq * mat(W(LayerTensor::query)).transpose();
    dh1.noalias() += dk * mat(W(LayerTensor::key)).transpose();
    dh1.noalias() += dv * mat(W(LayerTensor::value)).transpose();
    dx += layer_norm_backward(dh1, lc.ln1, W(LayerTensor::ln1_gain), G(LayerTensor::ln1_gain),
                              G(LayerTensor::ln1_bias));
  }

  auto dE = mat(grads.tensors[Parameters<T>::kTokenEmbedding]);
  auto dP = mat(grads.tensors[Parameters<T>::kPositionEmbedding]);
  for (Eigen::Index r = 0; r < B; ++r)
    for (Eigen::Index c = 0; c < L; ++c) {
      dE.row(batch.id(static_cast<std::size_t>(r), static_cast<std::size_t>(c))) += dx.row(r * L + c);
      dP.row(c) += dx.row(r * L + c);
    }
}

template <typename T>
Matrix<T> output_logits(const Parameters<T>& params, const Matrix<T>& hidden_rows) {
  Matrix<T> logits = hidden_rows * mat(params.tensors[Parameters<T>::kTokenEmbedding]).transpose();
  logits.rowwise() += vec(params.tensors[params.output_bias_slot()]);
  return logits;
}

template <typename T>
LogProbTensor forward_mlm(const Parameters<T>& params, const TokenBatch& batch) {
  const EncoderPass<T> pass(params, batch);
  const Matrix<T> logits = output_logits(params, pass.hidden());
  LogProbTensor out{batch.rows, batch.cols, params.vocab_size, {}};
  out.values.resize(batch.rows * batch.cols * params.vocab_size);
  std::vector<double> row;
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    log_softmax_row(logits, r, row);
    std::copy(row.begin(), row.end(), out.values.begin() + r * static_cast<Eigen::Index>(params.vocab_size));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Masked LM loss

template <typename T>
MlmStep<T>::MlmStep(const Parameters<T>& params, const MaskedBatch& batch, FaultInjection fault)
    : params_(&params), batch_(&batch), pass_(params, batch.tokens, fault) {
  batch.validate();
  const auto M = static_cast<Eigen::Index>(batch.masked.size());
  const auto d = static_cast<Eigen::Index>(params.preset.d_model);
  const auto L = batch.tokens.cols;
  masked_hidden_.resize(M, d);
  for (Eigen::Index m = 0; m < M; ++m) {
    const auto& mp = batch.masked[static_cast<std::size_t>(m)];
    masked_hidden_.row(m) = pass_.hidden().row(static_cast<Eigen::Index>(mp.row * L + mp.col));
  }
  const Matrix<T> logits = output_logits(params, masked_hidden_);
  probs_.resize(M, logits.cols());
  mask_counts_ = batch.masks_per_row();
  losses_.assign(batch.tokens.rows, 0.0);
  std::vector<double> row;
  for (Eigen::Index m = 0; m < M; ++m) {
    const auto& mp = batch.masked[static_cast<std::size_t>(m)];
    if (mp.original < 0 || static_cast<std::size_t>(mp.original) >= params.vocab_size)
      throw std::invalid_argument("masked original id out of range");
    log_softmax_row(logits, m, row);
    for (Eigen::Index j = 0; j < logits.cols(); ++j)
      probs_(m, j) = static_cast<T>(std::exp(row[static_cast<std::size_t>(j)]));
    losses_[mp.row] -= row[static_cast<std::size_t>(mp.original)];
  }
  for (std::size_t b = 0; b < losses_.size(); ++b) {
    losses_[b] /= static_cast<double>(mask_counts_[b]);
    if (!std::isfinite(losses_[b])) throw NumericError("non-finite masked LM loss");
  }
}

template <typename T>
Parameters<T> MlmStep<T>::gradient(std::span<const double> example_weights) const {
  const MaskedBatch& batch = *batch_;
  if (example_weights.size() != batch.tokens.rows)
    throw std::invalid_argument("one weight per example required");
  Parameters<T> grads = params_->zeros_like();
  Matrix<T> dlogits = probs_;
  for (Eigen::Index m = 0; m < dlogits.rows(); ++m) {
    const auto& mp = batch.masked[static_cast<std::size_t>(m)];
    dlogits(m, mp.original) -= static_cast<T>(1);
    dlogits.row(m) *= static_cast<T>(example_weights[mp.row] / static_cast<double>(mask_counts_[mp.row]));
  }
  vec(grads.tensors[grads.output_bias_slot()]) += dlogits.colwise().sum();
  const auto E = mat(params_->tensors[Parameters<T>::kTokenEmbedding]);
  mat(grads.tensors[Parameters<T>::kTokenEmbedding]).noalias() += dlogits.transpose() * masked_hidden_;
  const Matrix<T> dmasked = dlogits * E;

  const auto L = batch.tokens.cols;
  Matrix<T> dhidden = Matrix<T>::Zero(pass_.hidden().rows(), pass_.hidden().cols());
  for (Eigen::Index m = 0; m < dmasked.rows(); ++m) {
    const auto& mp = batch.masked[static_cast<std::size_t>(m)];
    dhidden.row(static_cast<Eigen::Index>(mp.row * L + mp.col)) += dmasked.row(m);
  }
  pass_.backward(dhidden, grads);
  return grads;
}

template <typename T>
LossAndGrad<T> loss_and_grad(const Parameters<T>& params, const MaskedBatch& batch, FaultInjection fault) {
  const MlmStep<T> step(params, batch, fault);
  const std::vector<double> ones(batch.tokens.rows, 1.0);
  return {step.example_losses(), step.gradient(ones)};
}

template <typename T>
Matrix<T> mean_pooled(const EncoderPass<T>& pass) {
  const TokenBatch& b = pass.batch();
  Matrix<T> out = Matrix<T>::Zero(static_cast<Eigen::Index>(b.rows), pass.hidden().cols());
  for (std::size_t r = 0; r < b.rows; ++r) {
    std::size_t n = 0;
    for (std::size_t c = 0; c < b.cols; ++c)
      if (b.real(r, c)) {
        out.row(static_cast<Eigen::Index>(r)) += pass.hidden().row(static_cast<Eigen::Index>(r * b.cols + c));
        ++n;
      }
    if (n) out.row(static_cast<Eigen::Index>(r)) /= static_cast<T>(n);
  }
  return out;
}

GradCheckResult grad_check(const EncoderParams& params, const MaskedBatch& batch, double epsilon,
                           std::size_t n_coords, std::uint64_t seed, FaultInjection fault) {
  if (!(epsilon > 0.0)) throw std::invalid_argument("grad_check epsilon must be positive");
  if (n_coords == 0) throw std::invalid_argument("grad_check needs at least one coordinate");
  Parameters<double> p = params.cast<double>();
  const auto analytic = loss_and_grad(p, batch, fault).grads;

  auto objective = [&](const Parameters<double>& q) {
    const MlmStep<double> step(q, batch);
    double s = 0.0;
    for (double l : step.example_losses()) s += l;
    return s;
  };

  std::vector<std::size_t> offsets;
  std::size_t total = 0;
  for (const auto& t : p.tensors) {
    offsets.push_back(total);
    total += t.values.size();
  }
  Rng rng(seed);
  GradCheckResult result;
  for (std::size_t k = 0; k < n_coords; ++k) {
    const std::size_t flat = uniform_index(rng, total);
    const std::size_t ti =
        static_cast<std::size_t>(std::upper_bound(offsets.begin(), offsets.end(), flat) - offsets.begin()) - 1;
    const std::size_t idx = flat - offsets[ti];
    double& w = p.tensors[ti].values[idx];
    const double saved = w;
    w = saved + epsilon;
    const double up = objective(p);
    w = saved - epsilon;
    const double down = objective(p);
    w = saved;
    const double numeric = (up - down) / (2.0 * epsilon);
    const double a = analytic.tensors[ti].values[idx];
    const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-10});
    if (rel > result.max_relative_error || result.checked == 0) {
      result.max_relative_error = std::max(rel, result.max_relative_error);
      result.worst_tensor = p.tensors[ti].name;
      result.worst_index = idx;
    }
    ++result.checked;
  }
  return result;
}

template struct Parameters<float>;
template struct Parameters<double>;
template Parameters<float> allocate_parameters<float>(const SizePreset&, std::size_t);
template Parameters<double> allocate_parameters<double>(const SizePreset&, std::size_t);
template class EncoderPass<float>;
template class EncoderPass<double>;
template class MlmStep<float>;
template class MlmStep<double>;
template LogProbTensor forward_mlm<float>(const Parameters<float>&, const TokenBatch&);
template LogProbTensor forward_mlm<double>(const Parameters<double>&, const TokenBatch&);
template Matrix<float> output_logits<float>(const Parameters<float>&, const Matrix<float>&);
template Matrix<double> output_logits<double>(const Parameters<double>&, const Matrix<double>&);
template LossAndGrad<float> loss_and_grad<float>(const Parameters<float>&, const MaskedBatch&, FaultInjection);
template LossAndGrad<double> loss_and_grad<double>(const Parameters<double>&, const MaskedBatch&, FaultInjection);
template Matrix<float> mean_pooled<float>(const EncoderPass<float>&);
template Matrix<double> mean_pooled<double>(const EncoderPass<double>&);

}  // namespace creole
