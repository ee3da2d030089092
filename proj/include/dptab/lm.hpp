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

// Training and inference helpers on top of TransformerLM: per-example loss
// gradients restricted to a trainable set, and next-token sampling.

#ifndef DPTAB_LM_HPP_
#define DPTAB_LM_HPP_

#include <Eigen/Dense>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "dptab/losses.hpp"
#include "dptab/parallel.hpp"
#include "dptab/rng.hpp"
#include "dptab/transformer.hpp"

namespace dptab {

// Loss of one example and, when `set` is non-empty, its gradient packed in
// TrainableSet order. `scratch` is a full-size buffer reused across calls.
template <typename Scalar>
LossTerms example_loss_and_grad(const TransformerLM<Scalar>& model, const TokenizedExample& example,
                                const LossSpec& spec, const NumericTokens& numeric, const TrainableSet& set,
                                typename TransformerLM<Scalar>::Vec& packed,
                                typename TransformerLM<Scalar>::Vec& scratch, Rng* dropout_rng = nullptr) {
  using Mat = typename TransformerLM<Scalar>::Mat;
  typename TransformerLM<Scalar>::Cache cache;
  const Mat logits = model.forward(example.ids, &cache, dropout_rng);
  Mat dlogits;
  const LossTerms terms = compute_loss<Scalar>(logits, example, spec, numeric, set.empty() ? nullptr : &dlogits);
  if (!std::isfinite(terms.total)) throw Error("non-finite loss");
  if (set.empty()) {
    packed.resize(0);
    return terms;
  }
  scratch.setZero(model.num_params());
  model.backward(cache, dlogits, scratch);
  set.gather(scratch, packed);
  return terms;
}

template <typename Scalar>
struct PerExampleGrads {
  std::vector<LossTerms> losses;
  // One row per example, columns in TrainableSet order.
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> grads;
};

// Materializes every per-example gradient; meant for small batches and
// checks. The trainer streams the same computation instead.
template <typename Scalar>
PerExampleGrads<Scalar> loss_and_per_example_grads(const TransformerLM<Scalar>& model,
                                                   const std::vector<TokenizedExample>& batch, const LossSpec& spec,
                                                   const NumericTokens& numeric, const TrainableSet& set,
                                                   std::size_t workers = 1) {
  PerExampleGrads<Scalar> out;
  out.losses.resize(batch.size());
  out.grads.resize(static_cast<Eigen::Index>(batch.size()), set.size());
  parallel_for(batch.size(), workers, [&](std::size_t i) {
    typename TransformerLM<Scalar>::Vec packed, scratch;
    try {
      out.losses[i] = example_loss_and_grad(model, batch[i], spec, numeric, set, packed, scratch);
    } catch (const Error& e) {
      throw Error("example " + std::to_string(i) + ": " + e.what());
    }
    if (!set.empty()) out.grads.row(static_cast<Eigen::Index>(i)) = packed.transpose();
  });
  return out;
}

// temperature 0 is greedy (first maximal index).
template <typename Derived>
TokenId sample_from_logits(const Eigen::MatrixBase<Derived>& logits, double temperature, Rng& rng) {
  Eigen::Index best = 0;
  const double top = static_cast<double>(logits.maxCoeff(&best));
  if (temperature <= 0.0) return static_cast<TokenId>(best);
  const Eigen::Index n = logits.size();
  std::vector<double> p(static_cast<std::size_t>(n));
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    p[static_cast<std::size_t>(i)] = std::exp((static_cast<double>(logits(i)) - top) / temperature);
    total += p[static_cast<std::size_t>(i)];
  }
  double u = rng.uniform() * total;
  for (Eigen::Index i = 0; i < n; ++i) {
    u -= p[static_cast<std::size_t>(i)];
    if (u < 0.0) return static_cast<TokenId>(i);
  }
  return static_cast<TokenId>(best);
}

template <typename Scalar>
TokenId sample_next(const TransformerLM<Scalar>& model, std::span<const TokenId> prefix, double temperature,
                    Rng& rng) {
  return sample_from_logits(model.next_logits(prefix), temperature, rng);
}

}  // namespace dptab

#endif  // DPTAB_LM_HPP_
