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

// Command-line front end. Talks to the library only through gdnorm.h.
//
// Exit codes: 0 success, 1 failed criterion or library error, 2 usage or
// configuration error.

#include <cstdint>
#include <cstdio>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "gdnorm/gdnorm.h"

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

struct Failed {
  int code;
};

void check(gdn_status st) {
  if (st == GDN_OK) return;
  std::cerr << "gdnorm: " << gdn_status_name(st) << ": " << gdn_last_error() << "\n";
  const bool usage = st == GDN_ERR_CONFIG || st == GDN_ERR_INVALID_ARGUMENT;
  throw Failed{usage ? kExitUsage : kExitFailure};
}

struct OwnedString {
  char* s = nullptr;
  ~OwnedString() { gdn_string_free(s); }
  std::string str() const { return s ? s : ""; }
};

using ConfigPtr = std::unique_ptr<gdn_config, decltype(&gdn_config_free)>;

struct ConfigArgs {
  std::string path;
  std::vector<std::string> sets;
  std::string out;

  void add_to(CLI::App* cmd, const char* out_help) {
    cmd->add_option("--config,-c", path, "JSON config file (defaults to the desk preset)")
        ->check(CLI::ExistingFile);
    cmd->add_option("--set", sets, "Override a config key, e.g. --set train.epochs=10");
    if (out_help) cmd->add_option("--out,-o", out, out_help);
  }

  ConfigPtr load() const {
    std::vector<const char*> ov;
    for (const auto& s : sets) ov.push_back(s.c_str());
    gdn_config* cfg = nullptr;
    check(gdn_config_load(path.empty() ? nullptr : path.c_str(), ov.data(), ov.size(), &cfg));
    ConfigPtr owned(cfg, &gdn_config_free);
    int applied = 0;
    check(gdn_config_apply_seed_env(cfg, &applied));
    if (!out.empty()) check(gdn_config_set_output_dir(cfg, out.c_str()));
    return owned;
  }
};

void print_line(const char* line, void*) {
  std::cerr << line << "\n";
  std::cerr.flush();
}

void print_stdout(const char* line, void*) {
  std::cout << line << "\n";
  std::cout.flush();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Debiased domain-specific batch normalization on synthetic retrieval benchmarks"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(gdn_version()) + " (" + gdn_source_revision() + ")");

  ConfigArgs gen_args;
  auto* gen = app.add_subcommand("gen", "Generate the source and held-out domains as JSONL");
  gen_args.add_to(gen, nullptr);
  std::string gen_out = "data";
  gen->add_option("--out,-o", gen_out, "Output directory")->capture_default_str();

  ConfigArgs train_args;
  auto* trn = app.add_subcommand("train", "Train a model and write a run directory");
  train_args.add_to(trn, "Run directory (overrides output_dir)");

  ConfigArgs eval_args;
  std::string eval_ckpt, eval_format = "table";
  auto* evl = app.add_subcommand("eval", "Evaluate a checkpoint on the held-out domain");
  eval_args.add_to(evl, "Directory for results.jsonl and results.txt");
  evl->add_option("--checkpoint", eval_ckpt, "Checkpoint archive")->required();
  evl->add_option("--format", eval_format, "Output format")
      ->check(CLI::IsMember({"json", "table"}))
      ->capture_default_str();

  ConfigArgs sweep_args;
  std::string sweep_format = "table";
  auto* swp = app.add_subcommand("sweep", "Train one model per lambda and report the path spread");
  sweep_args.add_to(swp, "Directory for sweep.jsonl");
  swp->add_option("--format", sweep_format, "Output format")
      ->check(CLI::IsMember({"json", "table"}))
      ->capture_default_str();

  std::string ex_ckpt, ex_kind = "mean", ex_noise = "variance", ex_out;
  double ex_lambda = 0.6;
  std::uint64_t ex_seed = 0;
  std::size_t ex_domain = 0;
  auto* exp = app.add_subcommand("export-path", "Write one normalization path as an archive");
  exp->add_option("--checkpoint", ex_ckpt, "Checkpoint archive")->required();
  exp->add_option("--kind", ex_kind, "Path kind")
      ->check(CLI::IsMember({"mean", "sampled", "domain"}))
      ->capture_default_str();
  exp->add_option("--lambda", ex_lambda, "Noise strength for sampled paths")->capture_default_str();
  auto* seed_opt = exp->add_option("--seed", ex_seed, "Noise seed for sampled paths");
  exp->add_option("--domain", ex_domain, "Source domain for domain paths")->capture_default_str();
  exp->add_option("--noise-scale", ex_noise, "Noise scaling")
      ->check(CLI::IsMember({"variance", "stddev"}))
      ->capture_default_str();
  exp->add_option("--out,-o", ex_out, "Output archive")->required();

  ConfigArgs imp_args;
  std::string imp_ckpt, imp_path, imp_format = "table";
  auto* imp = app.add_subcommand("import-path", "Score an exported path on the held-out domain");
  imp_args.add_to(imp, nullptr);
  imp->add_option("--checkpoint", imp_ckpt, "Checkpoint archive")->required();
  imp->add_option("--path", imp_path, "Path archive")->required();
  imp->add_option("--format", imp_format, "Output format")
      ->check(CLI::IsMember({"json", "table"}))
      ->capture_default_str();

  std::string suite = "unit";
  auto* rep = app.add_subcommand("repro", "Run the acceptance criteria");
  rep->add_option("suite,--suite", suite, "unit (criteria 1-6) or full (1-11)")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  try {
    if (*gen) {
      auto cfg = gen_args.load();
      OwnedString manifest;
      check(gdn_gen(cfg.get(), gen_out.c_str(), &manifest.s));
      std::cout << manifest.str() << "\n";
    } else if (*trn) {
      auto cfg = train_args.load();
      OwnedString ckpt;
      check(gdn_train(cfg.get(), print_line, nullptr, &ckpt.s));
      std::cout << ckpt.str() << "\n";
    } else if (*evl) {
      auto cfg = eval_args.load();
      OwnedString report;
      check(gdn_eval(cfg.get(), eval_ckpt.c_str(), eval_format.c_str(), &report.s));
      std::cout << report.str();
    } else if (*swp) {
      auto cfg = sweep_args.load();
      OwnedString report;
      check(gdn_sweep(cfg.get(), sweep_format.c_str(), print_line, nullptr, &report.s));
      std::cout << report.str();
    } else if (*exp) {
      if (seed_opt->count() == 0) {
        // GDNORM_SEED stands in for an absent --seed.
        ConfigArgs none;
        auto cfg = none.load();
        check(gdn_config_seed(cfg.get(), &ex_seed));
      }
      check(gdn_export_path(ex_ckpt.c_str(), ex_kind.c_str(), ex_lambda, ex_seed, ex_domain,
                            ex_noise.c_str(), ex_out.c_str()));
      std::cout << ex_out << "\n";
    } else if (*imp) {
      auto cfg = imp_args.load();
      OwnedString report;
      check(gdn_import_path(cfg.get(), imp_ckpt.c_str(), imp_path.c_str(), imp_format.c_str(),
                            &report.s));
      std::cout << report.str();
    } else if (*rep) {
      int passed = 0;
      check(gdn_repro(suite.c_str(), print_stdout, nullptr, &passed));
      std::cout << (passed ? "all criteria passed" : "some criteria failed") << "\n";
      return passed ? 0 : kExitFailure;
    }
  } catch (const Failed& f) {
    return f.code;
  }
  return 0;
}
