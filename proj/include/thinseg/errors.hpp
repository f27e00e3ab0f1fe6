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

#include <stdexcept>
#include <string>

namespace thinseg {

/// Invalid argument or configuration value. CLI exit code 1.
class ParameterError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Problem size exceeds what an operation supports (e.g. exhaustive search).
class SizeError : public ParameterError {
public:
    using ParameterError::ParameterError;
};

/// Unknown key in a lookup table (oracle case id, config key).
class LookupError : public ParameterError {
public:
    using ParameterError::ParameterError;
};

/// File could not be opened, read or written. CLI exit code 2.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed file contents.
class FormatError : public IoError {
public:
    using IoError::IoError;
};

/// Well-formed file using a feature we do not read (e.g. PGM maxval 4095).
class UnsupportedError : public FormatError {
public:
    using FormatError::FormatError;
};

/// A component broke its output contract (denoiser range, weight length).
/// CLI exit code 3.
class ContractError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

}  // namespace thinseg
