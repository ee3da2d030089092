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

#include "dptab/losses.hpp"

namespace dptab {

std::vector<double> lambda_from_schema(const Schema& schema, LambdaMode mode, double fixed_value) {
  if (mode == LambdaMode::fixed && !(fixed_value > 0.0)) throw InputError("fixed lambda must be positive");
  std::vector<double> lambda(schema.size(), 1.0);
  for (std::size_t i = 0; i < schema.size(); ++i) {
    const FeatureSpec& f = schema.features[i];
    if (!f.is_numerical()) continue;
    const double range = f.max - f.min;
    switch (mode) {
      case LambdaMode::range:
        lambda[i] = range > 0.0 ? range : 1.0;
        break;
      case LambdaMode::uniform_std:
        lambda[i] = range > 0.0 ? range / std::sqrt(12.0) : 1.0;
        break;
      case LambdaMode::fixed:
        lambda[i] = fixed_value;
        break;
    }
  }
  return lambda;
}

}  // namespace dptab
