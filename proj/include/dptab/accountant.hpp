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

// Renyi-DP accounting for the Poisson-subsampled Gaussian mechanism.

#ifndef DPTAB_ACCOUNTANT_HPP_
#define DPTAB_ACCOUNTANT_HPP_

#include <cstddef>
#include <string>
#include <vector>

#include "dptab/schema.hpp"

namespace dptab {

// Raised when a privacy target cannot be met.
class PrivacyError : public Error {
 public:
  using Error::Error;
};

// Orders in [1.25, 512]: 1.25, 1.5, 1.75, 2.0..10.9 in steps of 0.1, 11..63,
// then 64, 80, 96, 128, 256, 512.
const std::vector<double>& default_orders();

// RDP of one subsampled-Gaussian step at `order` (> 1) for sampling rate q
// and noise multiplier sigma, evaluated in the log domain.
double rdp_subsampled_gaussian(double q, double sigma, double order);

std::vector<double> compute_rdp(double q, double sigma, std::size_t steps,
                                const std::vector<double>& orders = default_orders());

struct EpsilonAtOrder {
  double epsilon = 0.0;
  double order = 0.0;
};

// epsilon = min over orders of rdp(order) + log(1/delta) / (order - 1).
EpsilonAtOrder epsilon_from_rdp(const std::vector<double>& rdp, const std::vector<double>& orders,
                                double delta);

// Epsilon after `steps` steps; 0 for no steps, +inf when sigma <= 0.
double rdp_epsilon(double q, double sigma, std::size_t steps, double delta);

// Smallest sigma (bisection tolerance 1e-3) whose epsilon does not exceed
// epsilon_target. `prior_rdp` (same order grid) is spend already committed.
// Throws PrivacyError with the achievable range when no sigma <= 1e4 works.
double calibrate_sigma(double epsilon_target, double delta, double q, std::size_t steps,
                       const std::vector<double>& prior_rdp = {});

// Running account of every DPSGD step taken against a dataset.
class PrivacyLedger {
 public:
  struct Run {
    double q = 0.0;
    double sigma = 0.0;
    std::size_t steps = 0;
    bool operator==(const Run&) const = default;
  };

  PrivacyLedger() : closed_(default_orders().size(), 0.0), rdp_(closed_) {}

  void record(double q, double sigma, std::size_t steps = 1);
  // RDP the next `steps` steps at (q, sigma) would add.
  static std::vector<double> step_rdp(double q, double sigma, std::size_t steps = 1);

  const std::vector<Run>& runs() const { return runs_; }
  const std::vector<double>& rdp() const { return rdp_; }
  std::size_t total_steps() const;
  bool empty() const { return runs_.empty(); }
  double epsilon(double delta) const;

  std::string to_json() const;
  static PrivacyLedger from_json(const std::string& text);

  bool operator==(const PrivacyLedger& other) const { return runs_ == other.runs_; }

 private:
  std::vector<Run> runs_;
  std::vector<double> unit_;    // one-step RDP of the last run
  std::vector<double> closed_;  // summed RDP of every run but the last
  std::vector<double> rdp_;     // closed_ + unit_ * last run's steps
};

}  // namespace dptab

#endif  // DPTAB_ACCOUNTANT_HPP_
