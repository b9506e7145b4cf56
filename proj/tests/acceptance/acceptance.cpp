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

// Runs the full criterion suite and prints one PASS/FAIL line per criterion.
// Every tolerance is pinned in src/repro.cpp.

#include <cstdio>
#include <exception>

#include "gdnorm/repro.hpp"

int main() {
  try {
    const gdnorm::ReproReport report = gdnorm::run_repro(
        "full",
        [](const gdnorm::CriterionResult& r) {
          std::printf("%s\n", gdnorm::format_criterion(r).c_str());
          std::fflush(stdout);
        },
        [](const std::string& line) {
          std::printf("%s\n", line.c_str());
          std::fflush(stdout);
        });
    std::size_t passed = 0;
    for (const auto& c : report.criteria) passed += c.passed;
    std::printf("%zu/%zu criteria passed\n", passed, report.criteria.size());
    return report.passed() ? 0 : 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "acceptance: %s\n", e.what());
    return 1;
  }
}
