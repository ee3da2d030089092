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

#include "dptab/accountant.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "json.hpp"

namespace dptab {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kMaxSigma = 1e4;
constexpr double kSigmaTolerance = 1e-3;

double log_add(double a, double b) {
  if (a == -kInf) return b;
  if (b == -kInf) return a;
  const double hi = std::max(a, b);
  return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

// log(exp(a) - exp(b)) for a >= b.
double log_sub(double a, double b) {
  if (b == -kInf) return a;
  if (a <= b) return -kInf;
  return a + std::log1p(-std::exp(b - a));
}

double log_erfc(double x) {
  if (x < 20.0) return std::log(std::erfc(x));
  // Asymptotic series; erfc underflows well before this matters.
  const double x2 = x * x;
  return -x2 - std::log(x) - 0.5 * std::log(M_PI) +
         std::log1p(-1.0 / (2.0 * x2) + 3.0 / (4.0 * x2 * x2) - 15.0 / (8.0 * x2 * x2 * x2));
}

double log_a_integer(double q, double sigma, int order) {
  double log_a = -kInf;
  double log_binom = 0.0;  // log C(order, i)
  for (int i = 0; i <= order; ++i) {
    if (i > 0) log_binom += std::log(static_cast<double>(order - i + 1)) - std::log(static_cast<double>(i));
    const double log_coef = log_binom + i * std::log(q) + (order - i) * std::log1p(-q);
    log_a = log_add(log_a, log_coef + (static_cast<double>(i) * i - i) / (2.0 * sigma * sigma));
  }
  return log_a;
}

double log_a_fractional(double q, double sigma, double order) {
  double log_a0 = -kInf, log_a1 = -kInf;
  const double z0 = sigma * sigma * std::log(1.0 / q - 1.0) + 0.5;
  double log_abs_binom = 0.0;  // log |C(order, i)|
  bool positive = true;
  for (int i = 0;; ++i) {
    if (i > 0) {
      const double factor = (order - i + 1) / static_cast<double>(i);
      log_abs_binom += std::log(std::abs(factor));
      if (factor < 0) positive = !positive;
    }
    const double j = order - i;
    const double log_t0 = log_abs_binom + i * std::log(q) + j * std::log1p(-q);
    const double log_t1 = log_abs_binom + j * std::log(q) + i * std::log1p(-q);
    const double log_e0 = std::log(0.5) + log_erfc((i - z0) / (M_SQRT2 * sigma));
    const double log_e1 = std::log(0.5) + log_erfc((z0 - j) / (M_SQRT2 * sigma));
    const double log_s0 = log_t0 + (static_cast<double>(i) * i - i) / (2.0 * sigma * sigma) + log_e0;
    const double log_s1 = log_t1 + (j * j - j) / (2.0 * sigma * sigma) + log_e1;
    if (positive) {
      log_a0 = log_add(log_a0, log_s0);
      log_a1 = log_add(log_a1, log_s1);
    } else {
      log_a0 = log_sub(log_a0, log_s0);
      log_a1 = log_sub(log_a1, log_s1);
    }
    if (std::max(log_s0, log_s1) < -30.0 && i > order) break;
    if (i > 100000) break;
  }
  return log_add(log_a0, log_a1);
}

}  // namespace

const std::vector<double>& default_orders() {
  static const std::vector<double> orders = [] {
    std::vector<double> o{1.25, 1.5, 1.75};
    for (int x = 10; x < 110; ++x) o.push_back(1.0 + x / 10.0);
    for (int a = 12; a < 64; ++a) o.push_back(a);
    for (double a : {64.0, 80.0, 96.0, 128.0, 256.0, 512.0}) o.push_back(a);
    return o;
  }();
  return orders;
}

double rdp_subsampled_gaussian(double q, double sigma, double order) {
  if (q == 0.0) return 0.0;
  if (sigma <= 0.0) return kInf;
  if (q >= 1.0) return order / (2.0 * sigma * sigma);
  double log_a;
  if (order == std::floor(order)) {
    log_a = log_a_integer(q, sigma, static_cast<int>(order));
  } else {
    log_a = log_a_fractional(q, sigma, order);
  }
  return log_a / (order - 1.0);
}

std::vector<double> compute_rdp(double q, double sigma, std::size_t steps, const std::vector<double>& orders) {
  std::vector<double> rdp(orders.size(), 0.0);
  if (steps == 0) return rdp;
  for (std::size_t i = 0; i < orders.size(); ++i) {
    rdp[i] = rdp_subsampled_gaussian(q, sigma, orders[i]) * static_cast<double>(steps);
  }
  return rdp;
}

EpsilonAtOrder epsilon_from_rdp(const std::vector<double>& rdp, const std::vector<double>& orders, double delta) {
  if (!(delta > 0.0 && delta < 1.0)) throw InputError("delta must lie in (0, 1)");
  EpsilonAtOrder best{kInf, 0.0};
  for (std::size_t i = 0; i < orders.size(); ++i) {
    const double eps = rdp[i] + std::log(1.0 / delta) / (orders[i] - 1.0);
    if (eps < best.epsilon) best = {eps, orders[i]};
  }
  best.epsilon = std::max(best.epsilon, 0.0);
  return best;
}

double rdp_epsilon(double q, double sigma, std::size_t steps, double delta) {
  if (!(q > 0.0 && q <= 1.0)) throw InputError("sampling rate must lie in (0, 1]");
  if (steps == 0) return 0.0;
  if (sigma <= 0.0) return kInf;
  return epsilon_from_rdp(compute_rdp(q, sigma, steps), default_orders(), delta).epsilon;
}

double calibrate_sigma(double epsilon_target, double delta, double q, std::size_t steps,
                       const std::vector<double>& prior_rdp) {
  if (!(epsilon_target > 0.0)) throw InputError("epsilon target must be positive");
  const auto& orders = default_orders();
  if (!prior_rdp.empty() && prior_rdp.size() != orders.size()) {
    throw InputError("prior RDP vector does not match the order grid");
  }
  auto epsilon_at = [&](double sigma) {
    std::vector<double> rdp = compute_rdp(q, sigma, steps, orders);
    for (std::size_t i = 0; i < prior_rdp.size(); ++i) rdp[i] += prior_rdp[i];
    return epsilon_from_rdp(rdp, orders, delta).epsilon;
  };
  const double floor_eps = epsilon_at(kMaxSigma);
  if (floor_eps > epsilon_target) {
    throw PrivacyError("epsilon " + std::to_string(epsilon_target) + " is unattainable at delta " +
                       std::to_string(delta) + ": achievable epsilon is >= " + std::to_string(floor_eps));
  }
  double hi = 1.0;
  while (epsilon_at(hi) > epsilon_target) hi *= 2.0;
  double lo = 0.0;
  if (hi > 1.0) lo = hi / 2.0;
  while (hi - lo > kSigmaTolerance) {
    const double mid = 0.5 * (lo + hi);
    if (epsilon_at(mid) <= epsilon_target) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return hi;
}

// --- PrivacyLedger -------------------------------------------------------------

std::vector<double> PrivacyLedger::step_rdp(double q, double sigma, std::size_t steps) {
  return compute_rdp(q, sigma, steps, default_orders());
}

void PrivacyLedger::record(double q, double sigma, std::size_t steps) {
  if (steps == 0) return;
  if (!runs_.empty() && runs_.back().q == q && runs_.back().sigma == sigma) {
    runs_.back().steps += steps;
  } else {
    closed_ = rdp_;
    runs_.push_back({q, sigma, 0});
    runs_.back().steps = steps;
    unit_ = step_rdp(q, sigma, 1);
  }
  // Same arithmetic as compute_rdp(q, sigma, steps) + earlier runs, so a run
  // calibrated with a prior matches the ledger bit for bit.
  const double n = static_cast<double>(runs_.back().steps);
  for (std::size_t i = 0; i < rdp_.size(); ++i) rdp_[i] = unit_[i] * n + closed_[i];
}

std::size_t PrivacyLedger::total_steps() const {
  std::size_t total = 0;
  for (const Run& run : runs_) total += run.steps;
  return total;
}

double PrivacyLedger::epsilon(double delta) const {
  if (runs_.empty()) return 0.0;
  return epsilon_from_rdp(rdp_, default_orders(), delta).epsilon;
}

std::string PrivacyLedger::to_json() const {
  nlohmann::ordered_json doc = nlohmann::ordered_json::array();
  for (const Run& run : runs_) {
    doc.push_back({{"q", run.q}, {"sigma", run.sigma}, {"steps", run.steps}});
  }
  return doc.dump();
}

PrivacyLedger PrivacyLedger::from_json(const std::string& text) {
  PrivacyLedger ledger;
  try {
    for (const auto& run : nlohmann::json::parse(text)) {
      ledger.record(run.at("q").get<double>(), run.at("sigma").get<double>(), run.at("steps").get<std::size_t>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed privacy ledger: ") + e.what());
  }
  return ledger;
}

}  // namespace dptab
