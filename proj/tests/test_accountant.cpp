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

#include <gtest/gtest.h>

#include <cmath>

#include "dptab/accountant.hpp"
#include "dptab/rng.hpp"
#include "oracles.hpp"

using namespace dptab;

TEST(AccountantTest, NoStepsNoSpend) {
  EXPECT_EQ(rdp_epsilon(0.01, 1.0, 0, 1e-5), 0.0);
  EXPECT_TRUE(std::isinf(rdp_epsilon(0.01, 0.0, 10, 1e-5)));
}

TEST(AccountantTest, FullBatchMatchesGaussianMechanism) {
  const double eps = rdp_epsilon(1.0, 4.0, 1, 1e-5);
  const double closed = oracle::gaussian_mechanism_epsilon(4.0, 1e-5);
  EXPECT_LE(std::abs(eps - closed) / closed, 0.05) << eps << " vs " << closed;
}

TEST(AccountantTest, MatchesQuadratureOracle) {
  const double eps = rdp_epsilon(0.01, 2.0, 1000, 1e-5);
  const double ref = oracle::epsilon_quadrature(0.01, 2.0, 1000, 1e-5);
  EXPECT_LE(std::abs(eps - ref) / ref, 0.01) << eps << " vs " << ref;
}

TEST(AccountantTest, PerOrderRdpMatchesQuadrature) {
  for (double order : {1.5, 2.0, 3.7, 8.0, 32.0}) {
    const double got = rdp_subsampled_gaussian(0.05, 1.1, order);
    const double ref = oracle::log_moment_quadrature(0.05, 1.1, order) / (order - 1.0);
    EXPECT_NEAR(got, ref, 1e-6 + 1e-4 * ref) << order;
  }
}

TEST(CalibrationTest, DefiningPropertyOnRandomInputs) {
  Rng rng(7);
  for (int i = 0; i < 12; ++i) {
    const double eps = 0.3 + 4.0 * rng.uniform();
    const double q = 0.001 + 0.1 * rng.uniform();
    const std::size_t steps = 10 + rng.index(3000);
    const double delta = std::pow(10.0, -5.0 - rng.index(3));
    const double sigma = calibrate_sigma(eps, delta, q, steps);
    EXPECT_LE(rdp_epsilon(q, sigma, steps, delta), eps);
  }
}

TEST(CalibrationTest, Monotonicity) {
  EXPECT_GT(calibrate_sigma(0.5, 1e-6, 0.02, 500), calibrate_sigma(1.0, 1e-6, 0.02, 500));
  EXPECT_GT(calibrate_sigma(1.0, 1e-6, 0.02, 1000), calibrate_sigma(1.0, 1e-6, 0.02, 500));
}

TEST(CalibrationTest, UnattainableTargetThrows) {
  // A single full-batch release cannot reach 1e-4 with sigma <= 1e4 at this delta.
  EXPECT_THROW(calibrate_sigma(1e-4, 1e-6, 1.0, 100000), PrivacyError);
}

TEST(LedgerTest, AccumulatesAndMatchesCalibration) {
  const double sigma = calibrate_sigma(1.0, 1e-6, 0.016, 250);
  PrivacyLedger ledger;
  double last = 0.0;
  for (int i = 0; i < 250; ++i) {
    ledger.record(0.016, sigma);
    const double eps = ledger.epsilon(1e-6);
    EXPECT_GE(eps, last);
    last = eps;
  }
  EXPECT_LE(last, 1.0);
  EXPECT_GT(last, 0.95);
  EXPECT_EQ(ledger.total_steps(), 250u);
  EXPECT_EQ(PrivacyLedger::from_json(ledger.to_json()).epsilon(1e-6), last);
}

TEST(LedgerTest, PriorSpendIsHonoured) {
  PrivacyLedger ledger;
  ledger.record(0.02, 1.5, 100);
  const double sigma = calibrate_sigma(2.0, 1e-6, 0.02, 200, ledger.rdp());
  ledger.record(0.02, sigma, 200);
  EXPECT_LE(ledger.epsilon(1e-6), 2.0);
  EXPECT_EQ(ledger.runs().size(), 2u);
}
