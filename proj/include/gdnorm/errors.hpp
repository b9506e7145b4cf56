// Copyright 2026 The gdnorm Authors
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

#pragma once

#include <stdexcept>
#include <string>

namespace gdnorm {

enum class ErrorCode {
  Contract = 1,
  Dimension,
  Index,
  DegenerateBatch,
  DegenerateEstimate,
  Numeric,
  Protocol,
  Io,
  Config,
  Checkpoint,
};

const char* to_string(ErrorCode code);

// Every failure raised by the library carries one of the codes above; the C
// API maps them onto gdn_status one-to-one.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

#define GDNORM_DEFINE_ERROR(Name, Code)                         \
  class Name : public Error {                                   \
   public:                                                      \
    explicit Name(const std::string& what) : Error(Code, what) {} \
  };

GDNORM_DEFINE_ERROR(ContractError, ErrorCode::Contract)
GDNORM_DEFINE_ERROR(DimensionError, ErrorCode::Dimension)
GDNORM_DEFINE_ERROR(IndexError, ErrorCode::Index)
GDNORM_DEFINE_ERROR(DegenerateBatchError, ErrorCode::DegenerateBatch)
GDNORM_DEFINE_ERROR(DegenerateEstimateError, ErrorCode::DegenerateEstimate)
GDNORM_DEFINE_ERROR(NumericError, ErrorCode::Numeric)
GDNORM_DEFINE_ERROR(ProtocolError, ErrorCode::Protocol)
GDNORM_DEFINE_ERROR(IoError, ErrorCode::Io)
GDNORM_DEFINE_ERROR(ConfigError, ErrorCode::Config)
GDNORM_DEFINE_ERROR(CheckpointError, ErrorCode::Checkpoint)

#undef GDNORM_DEFINE_ERROR

inline void require(bool cond, const std::string& what) {
  if (!cond) throw ContractError(what);
}

}  // namespace gdnorm
