/* Copyright (c) 2026 The sfgsr Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License. */

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace sfgsr::cli {

// Process exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;         // bad flags, paths or configuration
inline constexpr int kExitPartial = 2;       // some inputs could not be processed
inline constexpr int kExitVerification = 3;  // a verification check failed

// Runs one command line (args[0] is the program name).
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Worker count from SFG_THREADS (unset or 0 = hardware concurrency).
unsigned worker_count();

}  // namespace sfgsr::cli
