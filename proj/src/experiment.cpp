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

#include "gdnorm/experiment.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "json.hpp"

#include "gdnorm/archive.hpp"
#include "gdnorm/errors.hpp"

#ifndef GDNORM_SOURCE_REV
#define GDNORM_SOURCE_REV "unknown"
#endif

namespace gdnorm {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

const char* source_revision() { return GDNORM_SOURCE_REV; }

namespace {

void make_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create directory " + dir);
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path);
  os << text;
  if (!os) throw IoError("write failed: " + path);
}

std::string join(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

std::string dataset_file(const DomainDataset& ds, bool heldout) {
  return heldout ? "heldout.jsonl" : "domain_" + std::to_string(ds.domain_id) + ".jsonl";
}

NetSpec spec_for(const ExperimentConfig& cfg, const Benchmark& bm) {
  return net_spec_for(bm.sources, bm.sources.at(0).dim, cfg.model.hidden, cfg.model.embed_dim,
                      cfg.model.tied_bn, cfg.model.eps, cfg.model.momentum);
}

EmbedNet load_checked(const std::string& checkpoint, std::size_t input_dim, Archive* out = nullptr) {
  Archive a = read_archive(checkpoint);
  EmbedNet net = load_model(a);
  if (net.spec().input_dim != input_dim) {
    throw CheckpointError("checkpoint expects inputs of width " +
                          std::to_string(net.spec().input_dim) + ", data has " +
                          std::to_string(input_dim));
  }
  if (out) *out = std::move(a);
  return net;
}

RetrievalSplit heldout_split(const ExperimentConfig& cfg, const Benchmark& bm) {
  return make_split(bm.heldout, cfg.eval.queries_per_id);
}

std::string fixed(double v, int digits) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

}  // namespace

GenOutputs run_gen(const ExperimentConfig& cfg, const std::string& out_dir) {
  cfg.validate();
  const Benchmark bm = gen_domains(cfg.data.generator);
  make_dir(out_dir);
  GenOutputs out;
  out.dir = out_dir;
  ordered_json manifest;
  manifest["format"] = "gdnorm-datasets";
  manifest["format_version"] = 1;
  manifest["seed"] = cfg.seed;
  manifest["source_revision"] = source_revision();
  const auto& g = cfg.data.generator;
  manifest["generator"] = {{"num_domains", g.num_domains},
                           {"ids_per_domain", g.ids_per_domain},
                           {"samples_per_id", g.samples_per_id},
                           {"dim", g.dim},
                           {"latent_dim", g.latent_dim},
                           {"noise", g.noise},
                           {"shift_strength", g.shift_strength},
                           {"heldout_ids", g.heldout_ids},
                           {"heldout_samples_per_id", g.heldout_samples_per_id}};
  manifest["datasets"] = ordered_json::array();
  auto emit = [&](const DomainDataset& ds, bool heldout) {
    const std::string name = dataset_file(ds, heldout);
    const std::string path = join(out_dir, name);
    write_dataset_jsonl(ds, path);
    manifest["datasets"].push_back({{"file", name},
                                    {"role", heldout ? "heldout" : "source"},
                                    {"domain", ds.domain_id},
                                    {"samples", ds.samples.size()},
                                    {"identities", ds.identities().size()},
                                    {"sampling_seed", ds.sampling_seed},
                                    {"sha256", file_sha256(path)}});
    out.files.push_back(path);
  };
  for (const auto& ds : bm.sources) emit(ds, false);
  emit(bm.heldout, true);
  out.manifest = join(out_dir, "manifest.json");
  write_text(out.manifest, manifest.dump(2) + "\n");
  return out;
}

Benchmark load_benchmark(const ExperimentConfig& cfg) {
  if (cfg.data.dir.empty()) return gen_domains(cfg.data.generator);
  const std::string mpath = join(cfg.data.dir, "manifest.json");
  std::ifstream is(mpath, std::ios::binary);
  if (!is) throw IoError("cannot read " + mpath);
  ordered_json manifest;
  try {
    manifest = ordered_json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(mpath + ": " + e.what());
  }
  Benchmark bm;
  bool have_heldout = false;
  try {
    for (const auto& entry : manifest.at("datasets")) {
      const std::string path = join(cfg.data.dir, entry.at("file").get<std::string>());
      if (file_sha256(path) != entry.at("sha256").get<std::string>()) {
        throw IoError(path + " does not match its manifest hash");
      }
      DomainDataset ds = read_dataset_jsonl(path);
      if (ds.samples.size() != entry.at("samples").get<std::size_t>()) {
        throw IoError(path + " does not match its manifest sample count");
      }
      ds.sampling_seed = entry.at("sampling_seed").get<std::uint64_t>();
      if (entry.at("role").get<std::string>() == "heldout") {
        bm.heldout = std::move(ds);
        have_heldout = true;
      } else {
        bm.sources.push_back(std::move(ds));
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError(mpath + ": " + e.what());
  }
  if (bm.sources.size() < 2 || !have_heldout) {
    throw IoError(mpath + " needs at least two source datasets and one held-out dataset");
  }
  return bm;
}

TrainOutputs run_train(const ExperimentConfig& cfg, const LogSink& log) {
  cfg.validate();
  const Benchmark bm = load_benchmark(cfg);
  EmbedNet net(spec_for(cfg, bm), cfg.seed);
  const RetrievalSplit split = heldout_split(cfg, bm);

  TrainOutputs out;
  out.run_dir = cfg.output_dir;
  make_dir(out.run_dir);
  write_text(join(out.run_dir, "config.json"), cfg.to_json() + "\n");

  ordered_json seeds;
  seeds["seed"] = cfg.seed;
  seeds["data_seed"] = cfg.data.generator.seed;
  seeds["init_seed"] = cfg.seed;
  seeds["train_seed"] = cfg.train.seed;
  seeds["sampling_seeds"] = ordered_json::array();
  for (const auto& ds : bm.sources) seeds["sampling_seeds"].push_back(ds.sampling_seed);
  write_text(join(out.run_dir, "seeds.json"), seeds.dump(2) + "\n");

  ordered_json source;
  source["source_revision"] = source_revision();
  source["config_hash"] = cfg.hash();
  write_text(join(out.run_dir, "source.json"), source.dump(2) + "\n");

  const std::string metrics_path = join(out.run_dir, "metrics.jsonl");
  std::ofstream metrics(metrics_path, std::ios::binary);
  if (!metrics) throw IoError("cannot write " + metrics_path);
  auto on_epoch = [&](const EpochRecord& rec) {
    metrics << rec.to_json() << '\n';
    metrics.flush();
    if (log) {
      const double val = eval_mean_path(net, estimate_gp(net), split).map;
      log("epoch " + std::to_string(rec.epoch) + " loss_id " + fixed(rec.loss_id, 4) +
          " loss_triplet " + fixed(rec.loss_triplet, 4) + " loss_refine " +
          fixed(rec.loss_refine, 4) + " lr " + fixed(rec.lr, 6) + " heldout_map " +
          fixed(val, 4));
    }
  };
  out.log = train(net, bm.sources, cfg.train, on_epoch).log;
  if (!metrics) throw IoError("write failed: " + metrics_path);

  out.checkpoint = join(out.run_dir, "checkpoint.gdna");
  write_archive(model_archive(net, cfg.hash()), out.checkpoint);
  out.checkpoint_sha256 = file_sha256(out.checkpoint);
  write_archive(path_archive(mean_path(estimate_gp(net)), "mean"),
                join(out.run_dir, "mean_path.gdna"));
  for (std::size_t k = 0; k < net.num_domains(); ++k) {
    write_archive(path_archive(net.domain_path(k), "domain"),
                  join(out.run_dir, "domain_path_" + std::to_string(k) + ".gdna"));
  }
  return out;
}

std::string ResultRow::to_json() const {
  ordered_json j;
  j["baseline"] = baseline;
  j["domain"] = domain ? ordered_json(*domain) : ordered_json(nullptr);
  j["seed"] = seed ? ordered_json(*seed) : ordered_json(nullptr);
  j["lambda"] = lambda ? ordered_json(*lambda) : ordered_json(nullptr);
  j["map"] = result.map;
  j["rank1"] = result.rank(1);
  j["rank5"] = result.rank(5);
  j["rank10"] = result.rank(10);
  j["forward_passes"] = result.forward_passes;
  j["batches"] = result.batches;
  j["seconds_per_batch"] = result.seconds_per_batch;
  return j.dump();
}

std::vector<ResultRow> run_eval(const ExperimentConfig& cfg, const std::string& checkpoint) {
  cfg.validate();
  const Benchmark bm = load_benchmark(cfg);
  Archive archive;
  const EmbedNet net = load_checked(checkpoint, bm.heldout.dim, &archive);
  const RetrievalSplit split = heldout_split(cfg, bm);
  const EvalOptions opt{cfg.eval.batch_size};
  const GpEstimate gp = estimate_gp(net);

  std::vector<ResultRow> rows;
  auto wants = [&](const char* b) {
    for (const auto& x : cfg.eval.baselines) {
      if (x == b) return true;
    }
    return false;
  };
  if (wants("mean_path")) {
    BnPath stored = checkpoint_mean_path(archive);
    try {
      stored.validate(net.bn_widths());
    } catch (const Error& e) {
      throw CheckpointError(std::string("stored mean path: ") + e.what());
    }
    rows.push_back({"mean_path", {}, {}, {}, eval_path(net, stored, split, opt)});
  }
  if (wants("single_paths")) {
    for (std::size_t k = 0; k < net.num_domains(); ++k) {
      rows.push_back({"single_path", k, {}, {}, eval_single_path(net, k, split, opt)});
    }
  }
  if (wants("ensemble")) {
    EnsembleSpec spec = EnsembleSpec::uniform(net);
    if (!cfg.eval.ensemble_weights.empty()) spec.weights = cfg.eval.ensemble_weights;
    rows.push_back({"ensemble", {}, {}, {}, eval_ensemble(net, spec, split, opt, cfg.eval.fusion)});
  }
  if (wants("sampled_path")) {
    for (std::uint64_t seed : cfg.eval.seeds) {
      Rng rng(seed);
      const BnPath p = sample_path(gp, cfg.train.lambda, rng, cfg.train.noise_scale);
      rows.push_back({"sampled_path", {}, seed, cfg.train.lambda, eval_path(net, p, split, opt)});
    }
  }

  make_dir(cfg.output_dir);
  std::string jsonl;
  for (const auto& r : rows) jsonl += r.to_json() + "\n";
  write_text(join(cfg.output_dir, "results.jsonl"), jsonl);
  write_text(join(cfg.output_dir, "results.txt"), format_results(rows, "table"));
  return rows;
}

std::string format_results(const std::vector<ResultRow>& rows, const std::string& format) {
  if (format == "json") {
    std::string s;
    for (const auto& r : rows) s += r.to_json() + "\n";
    return s;
  }
  if (format != "table") throw ConfigError("unknown format '" + format + "'");
  std::ostringstream os;
  char line[160];
  std::snprintf(line, sizeof line, "%-14s %6s %6s %6s %8s %8s %8s %8s %9s %10s\n", "baseline",
                "domain", "seed", "lambda", "mAP", "R1", "R5", "R10", "fwd/batch", "ms/batch");
  os << line;
  for (const auto& r : rows) {
    const auto& res = r.result;
    std::snprintf(line, sizeof line, "%-14s %6s %6s %6s %8.4f %8.4f %8.4f %8.4f %9.2f %10.4f\n",
                  r.baseline.c_str(), r.domain ? std::to_string(*r.domain).c_str() : "-",
                  r.seed ? std::to_string(*r.seed).c_str() : "-",
                  r.lambda ? fixed(*r.lambda, 2).c_str() : "-", res.map, res.rank(1), res.rank(5),
                  res.rank(10),
                  res.batches ? static_cast<double>(res.forward_passes) / res.batches : 0.0,
                  1e3 * res.seconds_per_batch);
    os << line;
  }
  return os.str();
}

std::vector<SweepRow> run_sweep(const ExperimentConfig& cfg, const LogSink& log) {
  cfg.validate();
  const Benchmark bm = load_benchmark(cfg);
  const RetrievalSplit split = heldout_split(cfg, bm);
  std::vector<SweepRow> rows;
  for (double lambda : cfg.eval.lambda_grid) {
    const double one[] = {lambda};
    auto row = sweep_lambda(one, bm.sources, split, spec_for(cfg, bm), cfg.train,
                            cfg.eval.spread_paths, {cfg.eval.batch_size});
    if (log) log(sweep_row_json(row.at(0)));
    rows.push_back(std::move(row.at(0)));
  }
  make_dir(cfg.output_dir);
  write_text(join(cfg.output_dir, "sweep.jsonl"), format_sweep(rows, "json"));
  return rows;
}

std::string sweep_row_json(const SweepRow& row) {
  ordered_json j;
  j["lambda"] = row.lambda;
  j["map"] = row.mean_path.map;
  j["rank1"] = row.mean_path.rank(1);
  j["spread_paths"] = row.spread.paths;
  j["spread_min"] = row.spread.min_map;
  j["spread_mean"] = row.spread.mean_map;
  j["spread_max"] = row.spread.max_map;
  j["spread_width"] = row.spread.width();
  return j.dump();
}

std::string format_sweep(const std::vector<SweepRow>& rows, const std::string& format) {
  if (format == "json") {
    std::string s;
    for (const auto& r : rows) s += sweep_row_json(r) + "\n";
    return s;
  }
  if (format != "table") throw ConfigError("unknown format '" + format + "'");
  std::ostringstream os;
  char line[160];
  std::snprintf(line, sizeof line, "%6s %8s %8s %10s %10s %10s %10s\n", "lambda", "mAP", "R1",
                "spread_min", "spread_avg", "spread_max", "width");
  os << line;
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%6.2f %8.4f %8.4f %10.4f %10.4f %10.4f %10.4f\n", r.lambda,
                  r.mean_path.map, r.mean_path.rank(1), r.spread.min_map, r.spread.mean_map,
                  r.spread.max_map, r.spread.width());
    os << line;
  }
  return os.str();
}

void export_path(const std::string& checkpoint, const PathRequest& req, const std::string& out) {
  const EmbedNet net = load_model(read_archive(checkpoint));
  BnPath path;
  if (req.kind == "mean") {
    path = mean_path(estimate_gp(net));
  } else if (req.kind == "sampled") {
    Rng rng(req.seed);
    path = sample_path(estimate_gp(net), req.lambda, rng, req.noise_scale);
  } else if (req.kind == "domain") {
    if (req.domain >= net.num_domains()) {
      throw IndexError("domain " + std::to_string(req.domain) + " out of range");
    }
    path = net.domain_path(req.domain);
  } else {
    throw ConfigError("path kind must be mean, sampled or domain, got '" + req.kind + "'");
  }
  const bool sampled = req.kind == "sampled";
  write_archive(path_archive(path, req.kind, sampled ? req.lambda : 0.0, sampled ? req.seed : 0),
                out);
}

ResultRow import_path(const ExperimentConfig& cfg, const std::string& checkpoint,
                      const std::string& path_file) {
  cfg.validate();
  const Benchmark bm = load_benchmark(cfg);
  const EmbedNet net = load_checked(checkpoint, bm.heldout.dim);
  const BnPath path = load_path(read_archive(path_file), net.bn_widths());
  const RetrievalSplit split = heldout_split(cfg, bm);
  return {"imported_path", {}, {}, {}, eval_path(net, path, split, {cfg.eval.batch_size})};
}

}  // namespace gdnorm
