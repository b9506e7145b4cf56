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

#include <span>
#include <string>
#include <vector>

#include "gdnorm/autodiff.hpp"
#include "gdnorm/dsbn.hpp"
#include "gdnorm/rng.hpp"

namespace gdnorm {

// Affine coefficients for every normalization layer of a model, in depth
// order. Represents one domain's linearized normalization, a path sampled
// from the estimate, or the mean path.
struct BnPath {
  std::vector<AffineCoeffs> layers;

  std::vector<std::size_t> widths() const;
  // Throws DimensionError on width mismatch, NumericError on non-finite.
  void validate(std::span<const std::size_t> expected_widths) const;
  bool bitwise_equal(const BnPath& other) const;
};

// Factorized per-layer, per-channel Gaussians over the linearized
// coefficients of all domains.
struct GpEstimate {
  std::vector<Tensor> mean_a, mean_b;
  std::vector<Tensor> var_a, var_b;

  std::size_t layers() const noexcept { return mean_a.size(); }
};

enum class NoiseScale { Variance, StdDev };

NoiseScale parse_noise_scale(const std::string& s);
const char* to_string(NoiseScale s);

// Channelwise mean and divide-by-K variance over domain paths. Fewer than
// two paths is a DegenerateEstimateError unless allow_single is set, in
// which case a single path yields zero variance.
GpEstimate estimate_gp(std::span<const BnPath> domain_paths, bool allow_single = false);

BnPath mean_path(const GpEstimate& gp);

// path = M + lambda * S * eps with eps ~ N(0, I) and S = variance (default)
// or standard deviation. Noise is drawn layer by layer, all `a` channels
// then all `b` channels.
BnPath sample_path(const GpEstimate& gp, double lambda, Rng& rng,
                   NoiseScale scale = NoiseScale::Variance);

// Tape-recorded counterparts used by the refine step.
struct PathVars {
  std::vector<Var> a, b;
};

struct GpVars {
  std::vector<Var> mean_a, mean_b, var_a, var_b;
};

GpVars estimate_gp(Tape& tape, std::span<const PathVars> domain_paths,
                   bool allow_single = false);
PathVars mean_path(const GpVars& gp);
// Consumes the RNG exactly like the value-level sample_path.
PathVars sample_path(Tape& tape, const GpVars& gp, double lambda, Rng& rng,
                     NoiseScale scale = NoiseScale::Variance);

GpEstimate gp_values(const Tape& tape, const GpVars& gp);
BnPath path_values(const Tape& tape, const PathVars& path);

}  // namespace gdnorm
