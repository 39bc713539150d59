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

/// @file error.hpp
/// @brief Exception hierarchy shared by all modules.
///
/// Two families exist because the command-line front end maps them to
/// different exit codes: `UsageError` (bad arguments, exit 1) and
/// `DataError` (malformed or inconsistent inputs, exit 2). Everything else
/// derives from `Error`.

#pragma once

#include <stdexcept>
#include <string>

namespace slidecarver {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid argument or precondition violated by the caller.
class UsageError : public Error {
 public:
  using Error::Error;
};

/// Input data is malformed, truncated or inconsistent.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Tensor or raster extents do not agree.
class ShapeError : public DataError {
 public:
  using DataError::DataError;
};

}  // namespace slidecarver
