// Copyright 2026 The SlideCarver Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

/// @file cli.hpp
/// @brief The `slidecarver` command line: synth, train, segment, eval,
/// report and overlay.
///
/// Exit codes: 0 success, 1 usage error, 2 data error (unreadable or
/// inconsistent inputs). Every command writes a run manifest (JSON) next to
/// its output recording the command, resolved options, seed, paths and
/// toolkit version; no timestamps, so identical runs give identical files.

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace slidecarver {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr const char* kSeedEnv = "SLIDECARVER_SEED";

/// `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace slidecarver
