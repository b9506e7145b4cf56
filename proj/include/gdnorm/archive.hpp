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

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gdnorm/gp.hpp"
#include "gdnorm/model.hpp"
#include "gdnorm/tensor.hpp"

namespace gdnorm {

// Named-array archive. All integers and floats are little-endian:
//
//   magic      4 bytes  "GDNA"
//   version    u32
//   meta_len   u64
//   metadata   meta_len bytes of UTF-8 JSON (an object)
//   count      u64
//   count times:
//     name_len u32, name (name_len bytes)
//     ndim     u32, dims (ndim x u64)
//     values   product(dims) x f64
//
// The metadata object always carries "format" and "format_version".
inline constexpr std::uint32_t kArchiveVersion = 1;

struct NamedArray {
  std::string name;
  Tensor tensor;
};

struct Archive {
  std::uint32_t version = kArchiveVersion;
  std::string metadata = "{}";
  std::vector<NamedArray> arrays;

  // Throws CheckpointError if absent.
  const Tensor& get(const std::string& name) const;
  bool contains(const std::string& name) const;
};

std::vector<std::uint8_t> encode_archive(const Archive& archive);
// Throws CheckpointError on a truncated or malformed buffer.
Archive decode_archive(std::span<const std::uint8_t> bytes);
void write_archive(const Archive& archive, const std::string& path);
Archive read_archive(const std::string& path);

std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::string file_sha256(const std::string& path);

// Model checkpoint: network description and config hash in the metadata,
// every named tensor of the model, plus the current mean path under
// "mean_path/{layer}/a|b".
Archive model_archive(const EmbedNet& net, const std::string& config_hash);
EmbedNet load_model(const Archive& archive);
std::string checkpoint_config_hash(const Archive& archive);
// The mean path stored alongside the parameters.
BnPath checkpoint_mean_path(const Archive& archive);

// A single path under "path/{layer}/a|b". `kind` is free text recorded in
// the metadata (mean, sampled, domain).
Archive path_archive(const BnPath& path, const std::string& kind, double lambda = 0.0,
                     std::uint64_t seed = 0);
// Throws CheckpointError if the stored widths differ from `expected_widths`.
BnPath load_path(const Archive& archive, std::span<const std::size_t> expected_widths);
BnPath load_path(const Archive& archive);

}  // namespace gdnorm
