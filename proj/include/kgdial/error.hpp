// Copyright 2026 The kgdial Authors.
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

#ifndef KGDIAL_ERROR_HPP_
#define KGDIAL_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace kgdial {

// Root of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Problems with input data: malformed files, broken invariants, bad specs.
// The CLI maps these to exit code 2.
class DataError : public Error {
 public:
  using Error::Error;
};

class ParseError : public DataError {
 public:
  using DataError::DataError;
};

class IntegrityError : public DataError {
 public:
  using DataError::DataError;
};

class AlignmentError : public DataError {
 public:
  using DataError::DataError;
};

class ValidationError : public DataError {
 public:
  using DataError::DataError;
};

// Raised by the three-step cascade when a level has nothing to rank.
class SelectionError : public DataError {
 public:
  SelectionError(std::string level, const std::string& what)
      : DataError(what), level_(std::move(level)) {}
  const std::string& level() const { return level_; }

 private:
  std::string level_;
};

// Problems with models: missing or mismatched checkpoints, untrained heads,
// divergent training. The CLI maps these to exit code 3.
class ModelError : public Error {
 public:
  using Error::Error;
};

class NotTrainedError : public ModelError {
 public:
  using ModelError::ModelError;
};

class CheckpointError : public ModelError {
 public:
  using ModelError::ModelError;
};

class TrainingError : public ModelError {
 public:
  using ModelError::ModelError;
};

}  // namespace kgdial

#endif  // KGDIAL_ERROR_HPP_
