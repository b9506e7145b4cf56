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

#include <functional>
#include <string>
#include <vector>

#include "gdnorm/experiment.hpp"

namespace gdnorm {

struct CriterionResult {
  int id = 0;
  std::string name;
  bool passed = false;
  std::string detail;  // measured values against their thresholds
  double seconds = 0.0;
};

struct ReproReport {
  std::string suite;
  std::vector<CriterionResult> criteria;
  bool passed() const;
};

// "unit" runs the property criteria (1-6), "full" adds the trained-model
// criteria (7-11).
bool is_repro_suite(const std::string& suite);

// Runs every criterion of the suite in order. `on_result` sees each result
// as it completes; `on_note` receives informational lines. Throws
// ConfigError for an unknown suite.
ReproReport run_repro(const std::string& suite,
                      const std::function<void(const CriterionResult&)>& on_result = {},
                      const LogSink& on_note = {});

std::string format_criterion(const CriterionResult& r);

// Benchmark seeds of the trained-model criteria.
inline constexpr int kDeskSeeds = 5;

}  // namespace gdnorm
