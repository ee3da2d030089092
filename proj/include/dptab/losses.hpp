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

// Per-sentence training objectives over next-token logits.
//
// Position j of an example is predicted from logits row j-1. All functions
// return sums over one sentence; averaging over a batch is the trainer's job.
//
//   stage1_ce   sum_j -log p(t_j)
//   wcel        (1-alpha) * sum_{format j} -log p(t_j) + alpha * sum_{value j} -log p(t_j)
//   nul         sum over numeric spans of SE(n, n_hat), SE = 1 when the greedy
//               tokens do not spell a number, else 0.5 * ((n - n_hat) / lambda)^2
//   combined    wcel + beta * nul

#ifndef DPTAB_LOSSES_HPP_
#define DPTAB_LOSSES_HPP_

#include <Eigen/Dense>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "dptab/schema.hpp"
#include "dptab/tokenizer.hpp"

namespace dptab {

enum class LossKind { stage1_ce, combined };

// How the numeric loss reaches the logits. Both report the greedy SE value.
//   soft_digit: each digit is replaced by its expected value under the
//               digit-restricted softmax; the objective is the SE of that smooth
//               number and is differentiated exactly.
//   reinforce:  objective value is the greedy SE; gradient comes from the
//               score-function surrogate SE * sum log p(greedy token).
enum class NulMode { soft_digit, reinforce };

enum class LambdaMode { range, uniform_std, fixed };

struct LossSpec {
  LossKind kind = LossKind::combined;
  double alpha = 0.65;
  double beta = 1.0;
  std::vector<double> lambda;  // per schema feature; only numerical entries are read
  NulMode nul_mode = NulMode::soft_digit;

  void validate() const {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw InputError("loss.alpha must lie in [0, 1]");
    if (!(beta >= 0.0)) throw InputError("loss.beta must be non-negative");
    for (double l : lambda) {
      if (!(l > 0.0) || !std::isfinite(l)) throw InputError("loss lambda values must be positive");
    }
  }
};

// Error scale per feature: range = max - min, uniform_std = range / sqrt(12) (the
// spread of a uniform draw over the public range), fixed = `fixed_value`.
// Degenerate ranges fall back to 1.
std::vector<double> lambda_from_schema(const Schema& schema, LambdaMode mode, double fixed_value = 1.0);

struct LossTerms {
  double format_ce = 0.0;   // CE summed over format positions
  double tabular_ce = 0.0;  // CE summed over value positions
  double nul = 0.0;         // numeric term as optimized (soft or greedy)
  double nul_se = 0.0;      // greedy squared-error sum
  double total = 0.0;       // objective value for this sentence

  double ce() const { return format_ce + tabular_ce; }
};

template <typename Scalar>
using LogitMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
LogitMatrix<Scalar> log_softmax_rows(const LogitMatrix<Scalar>& logits) {
  LogitMatrix<Scalar> out(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const Scalar m = logits.row(r).maxCoeff();
    const Scalar lse = m + std::log((logits.row(r).array() - m).exp().sum());
    out.row(r) = logits.row(r).array() - lse;
  }
  return out;
}

// Argmax token at each span position, read as a decimal number.
// std::nullopt means the greedy tokens do not form a number.
template <typename Scalar>
std::optional<double> greedy_decode_number(const LogitMatrix<Scalar>& logits, const NumericSpan& span,
                                           const NumericTokens& numeric) {
  std::string text;
  for (std::size_t p = span.start; p <= span.end; ++p) {
    Eigen::Index best = 0;
    logits.row(static_cast<Eigen::Index>(p) - 1).maxCoeff(&best);
    const char c = numeric.character(static_cast<TokenId>(best));
    if (c == '\0') return std::nullopt;
    text.push_back(c);
  }
  return parse_number(text);
}

inline double squared_error(double truth, std::optional<double> decoded, double lambda) {
  if (!decoded) return 1.0;
  const double z = (truth - *decoded) / lambda;
  return 0.5 * z * z;
}

namespace detail {

inline double span_lambda(const LossSpec& spec, const NumericSpan& span) {
  if (span.feature < spec.lambda.size()) return spec.lambda[span.feature];
  return 1.0;
}

// Digit characters of the ground-truth span, with the place value of each
// digit counted from the right across integer and fractional digits.
struct DigitPattern {
  double sign = 1.0;
  int fraction_digits = 0;
  std::vector<std::size_t> positions;
  std::vector<double> place;  // 10^k, exact
};

inline DigitPattern digit_pattern(const std::vector<TokenId>& ids, const NumericSpan& span,
                                  const NumericTokens& numeric) {
  DigitPattern pattern;
  bool after_point = false;
  for (std::size_t p = span.start; p <= span.end; ++p) {
    const char c = numeric.character(ids[p]);
    if (c == '-') {
      pattern.sign = -1.0;
    } else if (c == '.') {
      after_point = true;
    } else if (c != '\0') {
      pattern.positions.push_back(p);
      if (after_point) ++pattern.fraction_digits;
    }
  }
  const std::size_t n = pattern.positions.size();
  pattern.place.resize(n);
  double value = 1.0;
  for (std::size_t i = n; i-- > 0;) {
    pattern.place[i] = value;
    value *= 10.0;
  }
  return pattern;
}

}  // namespace detail

// Loss terms of one sentence; when `dlogits` is non-null it receives
// d(total)/d(logits) (same shape as logits, overwritten).
template <typename Scalar>
LossTerms compute_loss(const LogitMatrix<Scalar>& logits, const TokenizedExample& example, const LossSpec& spec,
                       const NumericTokens& numeric, LogitMatrix<Scalar>* dlogits = nullptr) {
  const Eigen::Index T = static_cast<Eigen::Index>(example.ids.size());
  if (logits.rows() != T) throw Error("logits rows do not match the example length");
  const LogitMatrix<Scalar> logp = log_softmax_rows(logits);
  const bool combined = spec.kind == LossKind::combined;
  if (dlogits) dlogits->setZero(logits.rows(), logits.cols());

  LossTerms terms;
  for (Eigen::Index j = 1; j < T; ++j) {
    const TokenId target = example.ids[static_cast<std::size_t>(j)];
    const bool format = example.format_mask[static_cast<std::size_t>(j)];
    const double nll = -static_cast<double>(logp(j - 1, target));
    (format ? terms.format_ce : terms.tabular_ce) += nll;
    if (dlogits) {
      const double w = !combined ? 1.0 : (format ? 1.0 - spec.alpha : spec.alpha);
      if (w != 0.0) {
        dlogits->row(j - 1) += static_cast<Scalar>(w) * logp.row(j - 1).array().exp().matrix();
        (*dlogits)(j - 1, target) -= static_cast<Scalar>(w);
      }
    }
  }

  if (!combined) {
    terms.total = terms.ce();
    return terms;
  }

  for (const NumericSpan& span : example.numeric_spans) {
    const double lambda = detail::span_lambda(spec, span);
    const std::optional<double> greedy = greedy_decode_number(logits, span, numeric);
    const double greedy_se = squared_error(span.value, greedy, lambda);
    terms.nul_se += greedy_se;

    if (spec.nul_mode == NulMode::reinforce) {
      terms.nul += greedy_se;
      if (dlogits && spec.beta != 0.0 && greedy_se != 0.0) {
        const auto coeff = static_cast<Scalar>(spec.beta * greedy_se);
        for (std::size_t p = span.start; p <= span.end; ++p) {
          const Eigen::Index row = static_cast<Eigen::Index>(p) - 1;
          Eigen::Index best = 0;
          logits.row(row).maxCoeff(&best);
          // Descending on SE * log p(t_hat) pushes mass away from costly predictions.
          dlogits->row(row) -= coeff * logp.row(row).array().exp().matrix();
          (*dlogits)(row, best) += coeff;
        }
      }
      continue;
    }

    const detail::DigitPattern pattern = detail::digit_pattern(example.ids, span, numeric);
    const std::size_t n = pattern.positions.size();
    std::vector<Eigen::Matrix<double, 10, 1>> q(n);
    std::vector<double> expected(n);
    double mantissa = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const Eigen::Index row = static_cast<Eigen::Index>(pattern.positions[i]) - 1;
      Eigen::Matrix<double, 10, 1> z;
      for (int dgt = 0; dgt < 10; ++dgt) {
        z[dgt] = static_cast<double>(logits(row, numeric.digit[static_cast<std::size_t>(dgt)]));
      }
      q[i] = (z.array() - z.maxCoeff()).exp();
      q[i] /= q[i].sum();
      expected[i] = 0.0;
      for (int dgt = 0; dgt < 10; ++dgt) expected[i] += dgt * q[i][dgt];
      mantissa += expected[i] * pattern.place[i];
    }
    double scale = 1.0;
    for (int k = 0; k < pattern.fraction_digits; ++k) scale *= 10.0;
    const double soft = pattern.sign * mantissa / scale;
    const double residual = (span.value - soft) / lambda;
    terms.nul += 0.5 * residual * residual;
    if (dlogits && spec.beta != 0.0) {
      // d SE / d soft = -(n - soft) / lambda^2
      const double dsoft = -residual / lambda;
      for (std::size_t i = 0; i < n; ++i) {
        const Eigen::Index row = static_cast<Eigen::Index>(pattern.positions[i]) - 1;
        const double dexpected = spec.beta * dsoft * pattern.sign * pattern.place[i] / scale;
        for (int dgt = 0; dgt < 10; ++dgt) {
          (*dlogits)(row, numeric.digit[static_cast<std::size_t>(dgt)]) +=
              static_cast<Scalar>(dexpected * q[i][dgt] * (dgt - expected[i]));
        }
      }
    }
  }
  terms.total = (1.0 - spec.alpha) * terms.format_ce + spec.alpha * terms.tabular_ce + spec.beta * terms.nul;
  return terms;
}

template <typename Scalar>
double stage1_ce(const LogitMatrix<Scalar>& logits, const TokenizedExample& example) {
  LossSpec spec;
  spec.kind = LossKind::stage1_ce;
  return compute_loss(logits, example, spec, NumericTokens{}).total;
}

template <typename Scalar>
double wcel(const LogitMatrix<Scalar>& logits, const TokenizedExample& example, double alpha) {
  LossSpec spec;
  spec.kind = LossKind::stage1_ce;
  const LossTerms terms = compute_loss(logits, example, spec, NumericTokens{});
  return (1.0 - alpha) * terms.format_ce + alpha * terms.tabular_ce;
}

template <typename Scalar>
double nul(const LogitMatrix<Scalar>& logits, const TokenizedExample& example, const std::vector<double>& lambda,
           NulMode mode, const NumericTokens& numeric) {
  LossSpec spec;
  spec.alpha = 0.0;
  spec.beta = 1.0;
  spec.lambda = lambda;
  spec.nul_mode = mode;
  return compute_loss(logits, example, spec, numeric).nul;
}

template <typename Scalar>
double combined_loss(const LogitMatrix<Scalar>& logits, const TokenizedExample& example, const LossSpec& spec,
                     const NumericTokens& numeric) {
  LossSpec s = spec;
  s.kind = LossKind::combined;
  return compute_loss(logits, example, s, numeric).total;
}

}  // namespace dptab

#endif  // DPTAB_LOSSES_HPP_
