// Copyright 2026 The dptab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Small decoder-only causal transformer (pre-LayerNorm, GELU MLP, learned
// positions, untied output projection) with optional low-rank adapters on
// the attention projections. Forward and backward are written out by hand so
// that one example's gradient can be taken in isolation.

#ifndef DPTAB_TRANSFORMER_HPP_
#define DPTAB_TRANSFORMER_HPP_

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "dptab/rng.hpp"
#include "dptab/schema.hpp"
#include "dptab/tokenizer.hpp"

namespace dptab {

struct ModelConfig {
  int vocab_size = 0;
  int context_length = 256;
  int embed_dim = 128;
  int num_layers = 4;
  int num_heads = 4;
  int ffn_dim = 512;
  double dropout_prob = 0.0;
  int adapter_rank = 0;  // 0: full fine-tuning

  // Throws InputError.
  void validate() const {
    if (vocab_size <= 0) throw InputError("model vocab_size must be positive");
    if (context_length <= 1) throw InputError("model context_length must exceed 1");
    if (embed_dim <= 0 || num_layers <= 0 || num_heads <= 0 || ffn_dim <= 0) {
      throw InputError("model dimensions must be positive");
    }
    if (embed_dim % num_heads != 0) {
      throw InputError("embed_dim " + std::to_string(embed_dim) + " is not divisible by num_heads " +
                       std::to_string(num_heads));
    }
    if (!(dropout_prob >= 0.0 && dropout_prob < 1.0)) throw InputError("dropout must lie in [0, 1)");
    if (adapter_rank < 0) throw InputError("adapter_rank must be non-negative");
  }
  bool operator==(const ModelConfig&) const = default;
};

enum class ParamGroup { embedding, base, adapter };

struct ParamSlot {
  std::string name;
  Eigen::Index offset = 0;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  ParamGroup group = ParamGroup::base;
  double init_std = 0.0;  // 0: constant init
  double init_value = 0.0;

  Eigen::Index size() const { return rows * cols; }
};

// Named tensors laid out back to back in one flat parameter vector.
class ParamLayout {
 public:
  ParamLayout() = default;
  explicit ParamLayout(const ModelConfig& config);

  const std::vector<ParamSlot>& slots() const { return slots_; }
  const ParamSlot& slot(std::size_t i) const { return slots_[i]; }
  std::size_t index(const std::string& name) const { return index_.at(name); }
  Eigen::Index total() const { return total_; }

  struct Layer {
    std::size_t ln1_g, ln1_b, w_qkv, b_qkv, w_out, b_out;
    std::size_t ln2_g, ln2_b, w_in, b_in, w_proj, b_proj;
    std::size_t qkv_a = 0, qkv_b = 0, out_a = 0, out_b = 0;  // adapters
  };
  std::size_t wte = 0, wpe = 0, lnf_g = 0, lnf_b = 0, lm_head = 0;
  std::vector<Layer> layers;

 private:
  std::size_t add(std::string name, Eigen::Index rows, Eigen::Index cols, ParamGroup group,
                  double init_std, double init_value = 0.0);

  std::vector<ParamSlot> slots_;
  std::unordered_map<std::string, std::size_t> index_;
  Eigen::Index total_ = 0;
};

inline std::size_t ParamLayout::add(std::string name, Eigen::Index rows, Eigen::Index cols,
                                    ParamGroup group, double init_std, double init_value) {
  ParamSlot slot{name, total_, rows, cols, group, init_std, init_value};
  total_ += slot.size();
  slots_.push_back(std::move(slot));
  index_[std::move(name)] = slots_.size() - 1;
  return slots_.size() - 1;
}

inline ParamLayout::ParamLayout(const ModelConfig& config) {
  config.validate();
  const Eigen::Index d = config.embed_dim, f = config.ffn_dim, v = config.vocab_size;
  const Eigen::Index r = config.adapter_rank;
  const double base_std = 0.02;
  const double residual_std = base_std / std::sqrt(2.0 * config.num_layers);
  wte = add("wte", v, d, ParamGroup::embedding, base_std);
  wpe = add("wpe", config.context_length, d, ParamGroup::embedding, base_std);
  for (int l = 0; l < config.num_layers; ++l) {
    const std::string p = "h" + std::to_string(l) + ".";
    Layer layer{};
    layer.ln1_g = add(p + "ln1.g", 1, d, ParamGroup::base, 0.0, 1.0);
    layer.ln1_b = add(p + "ln1.b", 1, d, ParamGroup::base, 0.0);
    layer.w_qkv = add(p + "attn.w_qkv", d, 3 * d, ParamGroup::base, base_std);
    layer.b_qkv = add(p + "attn.b_qkv", 1, 3 * d, ParamGroup::base, 0.0);
    layer.w_out = add(p + "attn.w_out", d, d, ParamGroup::base, residual_std);
    layer.b_out = add(p + "attn.b_out", 1, d, ParamGroup::base, 0.0);
    layer.ln2_g = add(p + "ln2.g", 1, d, ParamGroup::base, 0.0, 1.0);
    layer.ln2_b = add(p + "ln2.b", 1, d, ParamGroup::base, 0.0);
    layer.w_in = add(p + "mlp.w_in", d, f, ParamGroup::base, base_std);
    layer.b_in = add(p + "mlp.b_in", 1, f, ParamGroup::base, 0.0);
    layer.w_proj = add(p + "mlp.w_out", f, d, ParamGroup::base, residual_std);
    layer.b_proj = add(p + "mlp.b_out", 1, d, ParamGroup::base, 0.0);
    if (r > 0) {
      layer.qkv_a = add(p + "attn.qkv_adapter_a", d, r, ParamGroup::adapter, base_std);
      layer.qkv_b = add(p + "attn.qkv_adapter_b", r, 3 * d, ParamGroup::adapter, 0.0);
      layer.out_a = add(p + "attn.out_adapter_a", d, r, ParamGroup::adapter, base_std);
      layer.out_b = add(p + "attn.out_adapter_b", r, d, ParamGroup::adapter, 0.0);
    }
    layers.push_back(layer);
  }
  lnf_g = add("ln_f.g", 1, d, ParamGroup::base, 0.0, 1.0);
  lnf_b = add("ln_f.b", 1, d, ParamGroup::base, 0.0);
  lm_head = add("lm_head", d, v, ParamGroup::base, base_std);
}

// Subset of parameters a training stage updates, as contiguous index ranges
// in layout order.
class TrainableSet {
 public:
  TrainableSet() = default;
  TrainableSet(const ParamLayout& layout, std::vector<std::size_t> slots);

  static TrainableSet all(const ParamLayout& layout);
  static TrainableSet groups(const ParamLayout& layout, std::initializer_list<ParamGroup> groups);

  const std::vector<std::size_t>& slots() const { return slots_; }
  Eigen::Index size() const { return size_; }
  bool empty() const { return size_ == 0; }

  template <typename Full, typename Packed>
  void gather(const Full& full, Packed& packed) const {
    packed.resize(size_);
    Eigen::Index at = 0;
    for (const auto& [offset, length] : ranges_) {
      packed.segment(at, length) = full.segment(offset, length);
      at += length;
    }
  }

  template <typename Packed, typename Full>
  void scatter_add(const Packed& packed, Full& full) const {
    Eigen::Index at = 0;
    for (const auto& [offset, length] : ranges_) {
      full.segment(offset, length) += packed.segment(at, length);
      at += length;
    }
  }

 private:
  std::vector<std::size_t> slots_;
  std::vector<std::pair<Eigen::Index, Eigen::Index>> ranges_;
  Eigen::Index size_ = 0;
};

inline TrainableSet::TrainableSet(const ParamLayout& layout, std::vector<std::size_t> slots)
    : slots_(std::move(slots)) {
  std::sort(slots_.begin(), slots_.end());
  slots_.erase(std::unique(slots_.begin(), slots_.end()), slots_.end());
  for (std::size_t s : slots_) {
    const ParamSlot& slot = layout.slot(s);
    if (!ranges_.empty() && ranges_.back().first + ranges_.back().second == slot.offset) {
      ranges_.back().second += slot.size();
    } else {
      ranges_.emplace_back(slot.offset, slot.size());
    }
    size_ += slot.size();
  }
}

inline TrainableSet TrainableSet::all(const ParamLayout& layout) {
  std::vector<std::size_t> slots(layout.slots().size());
  for (std::size_t i = 0; i < slots.size(); ++i) slots[i] = i;
  return TrainableSet(layout, std::move(slots));
}

inline TrainableSet TrainableSet::groups(const ParamLayout& layout,
                                         std::initializer_list<ParamGroup> groups) {
  std::vector<std::size_t> slots;
  for (std::size_t i = 0; i < layout.slots().size(); ++i) {
    for (ParamGroup g : groups) {
      if (layout.slot(i).group == g) slots.push_back(i);
    }
  }
  return TrainableSet(layout, std::move(slots));
}

template <typename Scalar>
class TransformerLM {
 public:
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using RowVec = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;
  using MatMap = Eigen::Map<Mat>;
  using ConstMatMap = Eigen::Map<const Mat>;

  struct LayerCache {
    Mat x_in, ln1_hat, a, qkv, att, qkv_mid, out_mid, x_mid, ln2_hat, c, u, g;
    Vec ln1_rstd, ln2_rstd;
    std::vector<Mat> probs;  // per head, T x T
    Mat attn_drop, mlp_drop;  // empty unless dropout was applied
  };

  struct Cache {
    std::vector<TokenId> ids;
    std::vector<LayerCache> layers;
    Mat x_final, lnf_hat, hf;
    Vec lnf_rstd;
  };

  TransformerLM() = default;
  TransformerLM(ModelConfig config, Vec params)
      : config_(std::move(config)), layout_(config_), params_(std::move(params)) {
    if (params_.size() != layout_.total()) {
      throw Error("parameter vector has " + std::to_string(params_.size()) + " entries, layout needs " +
                  std::to_string(layout_.total()));
    }
  }

  // Scaled normal init (std 0.02, residual projections 0.02/sqrt(2L)),
  // LayerNorm gains 1, biases 0, adapter B matrices 0.
  static TransformerLM init(const ModelConfig& config, std::uint64_t seed) {
    ParamLayout layout(config);
    Vec params(layout.total());
    Rng rng(seed);
    for (const ParamSlot& slot : layout.slots()) {
      for (Eigen::Index i = 0; i < slot.size(); ++i) {
        params[slot.offset + i] = slot.init_std > 0.0 ? static_cast<Scalar>(rng.normal(0.0, slot.init_std))
                                                      : static_cast<Scalar>(slot.init_value);
      }
    }
    return TransformerLM(config, std::move(params));
  }

  template <typename Other>
  TransformerLM<Other> cast() const {
    return TransformerLM<Other>(config_, params_.template cast<Other>());
  }

  const ModelConfig& config() const { return config_; }
  const ParamLayout& layout() const { return layout_; }
  const Vec& params() const { return params_; }
  Vec& params() { return params_; }
  Eigen::Index num_params() const { return params_.size(); }

  ConstMatMap param(std::size_t slot) const {
    const ParamSlot& s = layout_.slot(slot);
    return ConstMatMap(params_.data() + s.offset, s.rows, s.cols);
  }
  MatMap param(std::size_t slot) {
    const ParamSlot& s = layout_.slot(slot);
    return MatMap(params_.data() + s.offset, s.rows, s.cols);
  }
  ConstMatMap param(const std::string& name) const { return param(layout_.index(name)); }
  MatMap param(const std::string& name) { return param(layout_.index(name)); }

  // Logits (T x vocab). With `dropout_rng` set and dropout_prob > 0 the
  // residual branches are dropped out (training mode).
  Mat forward(std::span<const TokenId> ids, Cache* cache = nullptr, Rng* dropout_rng = nullptr) const;

  // Logits of the next token after `ids`.
  RowVec next_logits(std::span<const TokenId> ids) const {
    Cache cache;
    forward_hidden(ids, cache, nullptr);
    return cache.hf.row(cache.hf.rows() - 1) * param(layout_.lm_head);
  }

  // Accumulates d(loss)/d(params) into `grad` given d(loss)/d(logits).
  template <typename GradVec>
  void backward(const Cache& cache, const Mat& dlogits, GradVec& grad) const;

 private:
  static constexpr Scalar kLnEps = Scalar(1e-5);

  void check_ids(std::span<const TokenId> ids) const {
    if (ids.empty()) throw Error("forward needs at least one token");
    if (static_cast<int>(ids.size()) > config_.context_length) {
      throw Error("sequence of " + std::to_string(ids.size()) + " tokens exceeds context length " +
                  std::to_string(config_.context_length));
    }
    for (TokenId id : ids) {
      if (id < 0 || id >= config_.vocab_size) throw Error("token id " + std::to_string(id) + " out of range");
    }
  }

  void forward_hidden(std::span<const TokenId> ids, Cache& cache, Rng* dropout_rng) const;

  static void layer_norm(const Mat& x, const ConstMatMap& gain, const ConstMatMap& bias, Mat& hat,
                         Vec& rstd, Mat& y) {
    const Eigen::Index n = x.cols();
    hat.resize(x.rows(), n);
    rstd.resize(x.rows());
    for (Eigen::Index t = 0; t < x.rows(); ++t) {
      const Scalar mean = x.row(t).mean();
      const Scalar var = (x.row(t).array() - mean).square().sum() / Scalar(n);
      rstd[t] = Scalar(1) / std::sqrt(var + kLnEps);
      hat.row(t) = (x.row(t).array() - mean) * rstd[t];
    }
    y = (hat.array().rowwise() * gain.row(0).array()).rowwise() + bias.row(0).array();
  }

  // Returns dx; accumulates gain/bias gradients.
  template <typename GradMap>
  static Mat layer_norm_backward(const Mat& dy, const Mat& hat, const Vec& rstd, const ConstMatMap& gain,
                                 GradMap dgain, GradMap dbias) {
    dgain.row(0) += (dy.array() * hat.array()).colwise().sum().matrix();
    dbias.row(0) += dy.colwise().sum();
    Mat dhat = dy.array().rowwise() * gain.row(0).array();
    Mat dx(dy.rows(), dy.cols());
    for (Eigen::Index t = 0; t < dy.rows(); ++t) {
      const Scalar m1 = dhat.row(t).mean();
      const Scalar m2 = (dhat.row(t).array() * hat.row(t).array()).mean();
      dx.row(t) = rstd[t] * (dhat.row(t).array() - m1 - hat.row(t).array() * m2);
    }
    return dx;
  }

  static Scalar gelu(Scalar x) {
    const Scalar k = Scalar(0.7978845608028654);  // sqrt(2/pi)
    return Scalar(0.5) * x * (Scalar(1) + std::tanh(k * (x + Scalar(0.044715) * x * x * x)));
  }
  static Scalar gelu_grad(Scalar x) {
    const Scalar k = Scalar(0.7978845608028654);
    const Scalar t = std::tanh(k * (x + Scalar(0.044715) * x * x * x));
    return Scalar(0.5) * (Scalar(1) + t) +
           Scalar(0.5) * x * (Scalar(1) - t * t) * k * (Scalar(1) + Scalar(3 * 0.044715) * x * x);
  }

  Mat dropout_mask(Eigen::Index rows, Eigen::Index cols, Rng& rng) const {
    const double keep = 1.0 - config_.dropout_prob;
    Mat mask(rows, cols);
    for (Eigen::Index i = 0; i < mask.size(); ++i) {
      mask.data()[i] = rng.bernoulli(keep) ? static_cast<Scalar>(1.0 / keep) : Scalar(0);
    }
    return mask;
  }

  ModelConfig config_;
  ParamLayout layout_;
  Vec params_;
};

template <typename Scalar>
void TransformerLM<Scalar>::forward_hidden(std::span<const TokenId> ids, Cache& cache,
                                           Rng* dropout_rng) const {
  check_ids(ids);
  const Eigen::Index T = static_cast<Eigen::Index>(ids.size());
  const Eigen::Index d = config_.embed_dim;
  const Eigen::Index H = config_.num_heads;
  const Eigen::Index hd = d / H;
  const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(hd));
  const bool adapters = config_.adapter_rank > 0;
  const bool dropout = dropout_rng != nullptr && config_.dropout_prob > 0.0;

  cache.ids.assign(ids.begin(), ids.end());
  cache.layers.resize(layout_.layers.size());

  Mat x(T, d);
  {
    ConstMatMap wte = param(layout_.wte);
    ConstMatMap wpe = param(layout_.wpe);
    for (Eigen::Index t = 0; t < T; ++t) x.row(t) = wte.row(ids[static_cast<std::size_t>(t)]) + wpe.row(t);
  }

  for (std::size_t l = 0; l < layout_.layers.size(); ++l) {
    const auto& slots = layout_.layers[l];
    LayerCache& lc = cache.layers[l];
    lc.x_in = x;
    layer_norm(x, param(slots.ln1_g), param(slots.ln1_b), lc.ln1_hat, lc.ln1_rstd, lc.a);
    lc.qkv.noalias() = lc.a * param(slots.w_qkv);
    lc.qkv.rowwise() += param(slots.b_qkv).row(0);
    if (adapters) {
      lc.qkv_mid.noalias() = lc.a * param(slots.qkv_a);
      lc.qkv.noalias() += lc.qkv_mid * param(slots.qkv_b);
    }

    lc.att.resize(T, d);
    lc.probs.resize(static_cast<std::size_t>(H));
    for (Eigen::Index h = 0; h < H; ++h) {
      Mat& P = lc.probs[static_cast<std::size_t>(h)];
      P.noalias() = lc.qkv.middleCols(h * hd, hd) * lc.qkv.middleCols(d + h * hd, hd).transpose();
      for (Eigen::Index i = 0; i < T; ++i) {
        auto row = P.row(i).head(i + 1);
        row *= scale;
        const Scalar m = row.maxCoeff();
        row = (row.array() - m).exp();
        row /= row.sum();
        P.row(i).tail(T - i - 1).setZero();
      }
      lc.att.middleCols(h * hd, hd).noalias() = P * lc.qkv.middleCols(2 * d + h * hd, hd);
    }

    Mat y = lc.att * param(slots.w_out);
    y.rowwise() += param(slots.b_out).row(0);
    if (adapters) {
      lc.out_mid.noalias() = lc.att * param(slots.out_a);
      y.noalias() += lc.out_mid * param(slots.out_b);
    }
    if (dropout) {
      lc.attn_drop = dropout_mask(T, d, *dropout_rng);
      y.array() *= lc.attn_drop.array();
    } else {
      lc.attn_drop.resize(0, 0);
    }
    x += y;
    lc.x_mid = x;

    layer_norm(x, param(slots.ln2_g), param(slots.ln2_b), lc.ln2_hat, lc.ln2_rstd, lc.c);
    lc.u.noalias() = lc.c * param(slots.w_in);
    lc.u.rowwise() += param(slots.b_in).row(0);
    lc.g = lc.u.unaryExpr([](Scalar v) { return gelu(v); });
    Mat f = lc.g * param(slots.w_proj);
    f.rowwise() += param(slots.b_proj).row(0);
    if (dropout) {
      lc.mlp_drop = dropout_mask(T, d, *dropout_rng);
      f.array() *= lc.mlp_drop.array();
    } else {
      lc.mlp_drop.resize(0, 0);
    }
    x += f;
  }
  cache.x_final = x;
  layer_norm(x, param(layout_.lnf_g), param(layout_.lnf_b), cache.lnf_hat, cache.lnf_rstd, cache.hf);
}

template <typename Scalar>
typename TransformerLM<Scalar>::Mat TransformerLM<Scalar>::forward(std::span<const TokenId> ids, Cache* cache,
                                                                   Rng* dropout_rng) const {
  Cache local;
  Cache& c = cache ? *cache : local;
  forward_hidden(ids, c, dropout_rng);
  return c.hf * param(layout_.lm_head);
}

template <typename Scalar>
template <typename GradVec>
void TransformerLM<Scalar>::backward(const Cache& cache, const Mat& dlogits, GradVec& grad) const {
  const Eigen::Index T = static_cast<Eigen::Index>(cache.ids.size());
  const Eigen::Index d = config_.embed_dim;
  const Eigen::Index H = config_.num_heads;
  const Eigen::Index hd = d / H;
  const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(hd));
  const bool adapters = config_.adapter_rank > 0;

  auto G = [&](std::size_t slot) {
    const ParamSlot& s = layout_.slot(slot);
    return MatMap(grad.data() + s.offset, s.rows, s.cols);
  };

  G(layout_.lm_head).noalias() += cache.hf.transpose() * dlogits;
  Mat dhf = dlogits * param(layout_.lm_head).transpose();
  Mat dx = layer_norm_backward(dhf, cache.lnf_hat, cache.lnf_rstd, param(layout_.lnf_g), G(layout_.lnf_g),
                               G(layout_.lnf_b));

  for (std::size_t l = layout_.layers.size(); l-- > 0;) {
    const auto& slots = layout_.layers[l];
    const LayerCache& lc = cache.layers[l];

    // MLP branch: x_out = x_mid + drop(gelu(c W_in + b_in) W_proj + b_proj)
    Mat df = dx;
    if (lc.mlp_drop.size()) df.array() *= lc.mlp_drop.array();
    G(slots.w_proj).noalias() += lc.g.transpose() * df;
    G(slots.b_proj).row(0) += df.colwise().sum();
    Mat du = df * param(slots.w_proj).transpose();
    du.array() *= lc.u.unaryExpr([](Scalar v) { return gelu_grad(v); }).array();
    G(slots.w_in).noalias() += lc.c.transpose() * du;
    G(slots.b_in).row(0) += du.colwise().sum();
    Mat dc = du * param(slots.w_in).transpose();
    dx += layer_norm_backward(dc, lc.ln2_hat, lc.ln2_rstd, param(slots.ln2_g), G(slots.ln2_g), G(slots.ln2_b));

    // Attention branch: x_mid = x_in + drop(att W_out + b_out [+ att A B])
    Mat dy = dx;
    if (lc.attn_drop.size()) dy.array() *= lc.attn_drop.array();
    G(slots.w_out).noalias() += lc.att.transpose() * dy;
    G(slots.b_out).row(0) += dy.colwise().sum();
    Mat datt = dy * param(slots.w_out).transpose();
    if (adapters) {
      G(slots.out_b).noalias() += lc.out_mid.transpose() * dy;
      Mat dmid = dy * param(slots.out_b).transpose();
      G(slots.out_a).noalias() += lc.att.transpose() * dmid;
      datt.noalias() += dmid * param(slots.out_a).transpose();
    }

    Mat dqkv = Mat::Zero(T, 3 * d);
    for (Eigen::Index h = 0; h < H; ++h) {
      const Mat& P = lc.probs[static_cast<std::size_t>(h)];
      auto q = lc.qkv.middleCols(h * hd, hd);
      auto k = lc.qkv.middleCols(d + h * hd, hd);
      auto v = lc.qkv.middleCols(2 * d + h * hd, hd);
      auto dO = datt.middleCols(h * hd, hd);
      Mat dP = dO * v.transpose();
      dqkv.middleCols(2 * d + h * hd, hd).noalias() += P.transpose() * dO;
      Mat dS = P.array() * (dP.array().colwise() - (dP.array() * P.array()).rowwise().sum());
      dS *= scale;
      dqkv.middleCols(h * hd, hd).noalias() += dS * k;
      dqkv.middleCols(d + h * hd, hd).noalias() += dS.transpose() * q;
    }

    G(slots.w_qkv).noalias() += lc.a.transpose() * dqkv;
    G(slots.b_qkv).row(0) += dqkv.colwise().sum();
    Mat da = dqkv * param(slots.w_qkv).transpose();
    if (adapters) {
      G(slots.qkv_b).noalias() += lc.qkv_mid.transpose() * dqkv;
      Mat dmid = dqkv * param(slots.qkv_b).transpose();
      G(slots.qkv_a).noalias() += lc.a.transpose() * dmid;
      da.noalias() += dmid * param(slots.qkv_a).transpose();
    }
    dx += layer_norm_backward(da, lc.ln1_hat, lc.ln1_rstd, param(slots.ln1_g), G(slots.ln1_g), G(slots.ln1_b));
  }

  MatMap dwte = G(layout_.wte);
  MatMap dwpe = G(layout_.wpe);
  for (Eigen::Index t = 0; t < T; ++t) {
    dwte.row(cache.ids[static_cast<std::size_t>(t)]) += dx.row(t);
    dwpe.row(t) += dx.row(t);
  }
}

using Model = TransformerLM<float>;

}  // namespace dptab

#endif  // DPTAB_TRANSFORMER_HPP_
