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

#ifndef DPTAB_TOOLS_CLI_HPP_
#define DPTAB_TOOLS_CLI_HPP_

#include <ostream>
#include <string>
#include <vector>

namespace dptab::cli {

enum ExitCode : int { kOk = 0, kInputError = 2, kPrivacyStop = 3, kGenerationFailure = 4, kInternalError = 1 };

// args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace dptab::cli

#endif  // DPTAB_TOOLS_CLI_HPP_
