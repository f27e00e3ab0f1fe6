// Copyright 2026 The thinseg Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <functional>
#include <ostream>
#include <string>
#include <vector>

namespace thinseg::cli {

enum ExitCode : int { ok = 0, validation = 1, io = 2, contract = 3 };

/// Runs one command line (args[0] is the program name). Errors are reported
/// on `err` and mapped to exit codes; nothing is thrown.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Runs `action`, reporting library exceptions on `err` as exit codes.
int guarded(const std::function<void()>& action, std::ostream& err);

}  // namespace thinseg::cli
