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

#include "gdnorm/gp.hpp"

#include <cmath>
#include <cstring>

#include "gdnorm/errors.hpp"

namespace gdnorm {

std::vector<std::size_t> BnPath::widths() const {
  std::vector<std::size_t> w;
  w.reserve(layers.size());
  for (const auto& l : layers) w.push_back(l.a.size());
  return w;
}

void BnPath::validate(std::span<const std::size_t> expected_widths) const {
  if (layers.size() != expected_widths.size()) {
    throw DimensionError("path has " + std::to_string(layers.size()) +
                         " layers, model has " +
                         std::to_string(expected_widths.size()));
  }
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& c = layers[l];
    if (c.a.shape() != Shape{expected_widths[l]} ||
        c.b.shape() != Shape{expected_widths[l]}) {
      throw DimensionError("path layer " + std::to_string(l) + " has width " +
                           shape_str(c.a.shape()) + ", expected " +
                           std::to_string(expected_widths[l]));
    }
    if (!c.a.all_finite() || !c.b.all_finite()) {
      throw NumericError("path layer " + std::to_string(l) + " is not finite");
    }
  }
}

bool BnPath::bitwise_equal(const BnPath& other) const {
  if (layers.size() != other.layers.size()) return false;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (!layers[l].a.same_values(other.layers[l].a) ||
        !layers[l].b.same_values(other.layers[l].b)) {
      return false;
    }
  }
  return true;
}

NoiseScale parse_noise_scale(const std::string& s) {
  if (s == "variance") return NoiseScale::Variance;
  if (s == "stddev") return NoiseScale::StdDev;
  throw ConfigError("noise_scale must be 'variance' or 'stddev', got '" + s + "'");
}

const char* to_string(NoiseScale s) {
  return s == NoiseScale::Variance ? "variance" : "stddev";
}

namespace {

void check_count(std::size_t k, bool allow_single) {
  if (k == 0) throw DegenerateEstimateError("no domain paths to estimate from");
  if (k < 2 && !allow_single) {
    throw DegenerateEstimateError(
        "estimating the process needs at least 2 domains, got 1");
  }
}

}  // namespace

GpEstimate estimate_gp(std::span<const BnPath> domain_paths, bool allow_single) {
  check_count(domain_paths.size(), allow_single);
  const auto widths = domain_paths[0].widths();
  for (const auto& p : domain_paths) p.validate(widths);

  const double k = static_cast<double>(domain_paths.size());
  GpEstimate gp;
  for (std::size_t l = 0; l < widths.size(); ++l) {
    Tensor ma(Shape{widths[l]}), mb(Shape{widths[l]});
    Tensor va(Shape{widths[l]}), vb(Shape{widths[l]});
    // Same arithmetic as Tape::mean, so both estimators agree bitwise.
    const auto& first = domain_paths[0].layers[l];
    for (const auto& p : domain_paths)
      for (std::size_t c = 0; c < widths[l]; ++c) {
        ma[c] += p.layers[l].a[c] - first.a[c];
        mb[c] += p.layers[l].b[c] - first.b[c];
      }
    for (std::size_t c = 0; c < widths[l]; ++c) {
      ma[c] = first.a[c] + ma[c] / k;
      mb[c] = first.b[c] + mb[c] / k;
    }
    auto sq = [](double x, double m) { return (x - m) * (x - m); };
    for (const auto& p : domain_paths)
      for (std::size_t c = 0; c < widths[l]; ++c) {
        va[c] += sq(p.layers[l].a[c], ma[c]) - sq(first.a[c], ma[c]);
        vb[c] += sq(p.layers[l].b[c], mb[c]) - sq(first.b[c], mb[c]);
      }
    for (std::size_t c = 0; c < widths[l]; ++c) {
      va[c] = sq(first.a[c], ma[c]) + va[c] / k;
      vb[c] = sq(first.b[c], mb[c]) + vb[c] / k;
    }
    gp.mean_a.push_back(std::move(ma));
    gp.mean_b.push_back(std::move(mb));
    gp.var_a.push_back(std::move(va));
    gp.var_b.push_back(std::move(vb));
  }
  return gp;
}

BnPath mean_path(const GpEstimate& gp) {
  BnPath p;
  for (std::size_t l = 0; l < gp.layers(); ++l) {
    p.layers.push_back({gp.mean_a[l], gp.mean_b[l]});
  }
  return p;
}

namespace {

void check_lambda(double lambda) {
  if (!(lambda >= 0.0)) throw ContractError("sampling ratio lambda must be >= 0");
}

double noise_multiplier(double var, NoiseScale scale) {
  return scale == NoiseScale::Variance ? var : std::sqrt(var);
}

}  // namespace

BnPath sample_path(const GpEstimate& gp, double lambda, Rng& rng, NoiseScale scale) {
  check_lambda(lambda);
  BnPath p = mean_path(gp);
  for (std::size_t l = 0; l < gp.layers(); ++l) {
    auto perturb = [&](Tensor& out, const Tensor& mean, const Tensor& var) {
      for (std::size_t c = 0; c < out.size(); ++c) {
        const double eps = rng.normal();
        if (lambda != 0.0) {
          out[c] = mean[c] + (lambda * noise_multiplier(var[c], scale)) * eps;
        }
      }
    };
    perturb(p.layers[l].a, gp.mean_a[l], gp.var_a[l]);
    perturb(p.layers[l].b, gp.mean_b[l], gp.var_b[l]);
  }
  return p;
}

GpVars estimate_gp(Tape& tape, std::span<const PathVars> domain_paths,
                   bool allow_single) {
  check_count(domain_paths.size(), allow_single);
  const std::size_t layers = domain_paths[0].a.size();
  GpVars gp;
  for (std::size_t l = 0; l < layers; ++l) {
    std::vector<Var> as, bs;
    for (const auto& p : domain_paths) {
      if (p.a.size() != layers || p.b.size() != layers) {
        throw DimensionError("domain paths disagree on layer count");
      }
      as.push_back(p.a[l]);
      bs.push_back(p.b[l]);
    }
    Var ma = tape.mean(as);
    Var mb = tape.mean(bs);
    std::vector<Var> da, db;
    for (std::size_t k = 0; k < as.size(); ++k) {
      da.push_back(tape.square(tape.sub(as[k], ma)));
      db.push_back(tape.square(tape.sub(bs[k], mb)));
    }
    gp.mean_a.push_back(ma);
    gp.mean_b.push_back(mb);
    gp.var_a.push_back(tape.mean(da));
    gp.var_b.push_back(tape.mean(db));
  }
  return gp;
}

PathVars mean_path(const GpVars& gp) { return PathVars{gp.mean_a, gp.mean_b}; }

PathVars sample_path(Tape& tape, const GpVars& gp, double lambda, Rng& rng,
                     NoiseScale scale) {
  check_lambda(lambda);
  PathVars p;
  auto draw = [&](Var mean, Var var) {
    const std::size_t n = tape.value(mean).size();
    Tensor eps(Shape{n});
    for (std::size_t c = 0; c < n; ++c) eps[c] = rng.normal();
    Var s = scale == NoiseScale::Variance ? var : tape.sqrt(var);
    return tape.add(mean, tape.mul_const(tape.scale(s, lambda), eps));
  };
  for (std::size_t l = 0; l < gp.mean_a.size(); ++l) {
    p.a.push_back(draw(gp.mean_a[l], gp.var_a[l]));
    p.b.push_back(draw(gp.mean_b[l], gp.var_b[l]));
  }
  return p;
}

GpEstimate gp_values(const Tape& tape, const GpVars& gp) {
  GpEstimate out;
  for (std::size_t l = 0; l < gp.mean_a.size(); ++l) {
    out.mean_a.push_back(tape.value(gp.mean_a[l]));
    out.mean_b.push_back(tape.value(gp.mean_b[l]));
    out.var_a.push_back(tape.value(gp.var_a[l]));
    out.var_b.push_back(tape.value(gp.var_b[l]));
  }
  return out;
}

BnPath path_values(const Tape& tape, const PathVars& path) {
  BnPath out;
  for (std::size_t l = 0; l < path.a.size(); ++l) {
    out.layers.push_back({tape.value(path.a[l]), tape.value(path.b[l])});
  }
  return out;
}

}  // namespace gdnorm
