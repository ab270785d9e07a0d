#pragma once

// Command implementations behind the CLI front end. Every command resolves
// its config, writes a RunManifest into the output directory first, then
// produces its outputs. Exit codes: 0 success, 1 validation error, 2 runtime
// fault; machine-readable error JSON goes to stderr.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "catchd/corpus.hpp"
#include "catchd/eval.hpp"
#include "catchd/model_io.hpp"
#include "catchd/synth.hpp"
#include "catchd/trainer.hpp"

#ifndef CATCHD_REVISION
#define CATCHD_REVISION "unknown"
#endif

namespace catchd::cli {

namespace fs = std::filesystem;

class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("invalid JSON in " + path + ": " + e.what());
  }
  return j;
}

inline void write_json_file(const fs::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write: " + path.string());
  out << j.dump(2) << "\n";
}

// refuse to reuse a non-empty output directory unless forced
inline void prepare_out_dir(const fs::path& dir, bool force) {
  if (fs::exists(dir) && !fs::is_empty(dir) && !force)
    throw ValidationError("output directory exists and is not empty: " + dir.string() +
                          " (use --force to overwrite)");
  fs::create_directories(dir);
}

inline std::string timestamp() {
  auto now = std::chrono::system_clock::now();
  auto t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

inline void write_manifest(const fs::path& out_dir, const std::string& command,
                           const nlohmann::json& resolved_config,
                           const std::vector<std::uint64_t>& seeds) {
  nlohmann::json m;
  m["command"] = command;
  m["config"] = resolved_config;
  m["revision"] = CATCHD_REVISION;
  m["timestamp"] = timestamp();
  m["seeds"] = seeds;
  m["output_dir"] = out_dir.string();
  write_json_file(out_dir / "manifest.json", m);
}

// ------------------------------------------------------------------ config

// The "data" section either lists prepared JSONL files or embeds a synthetic
// spec; both yield one CorpusSplit per platform.
inline std::vector<corpus::CorpusSplit> load_data_section(const nlohmann::json& cfg) {
  if (!cfg.contains("data")) throw ValidationError("config missing \"data\" section");
  const auto& data = cfg.at("data");
  corpus::SplitFractions fr;
  if (data.contains("split")) {
    fr.train = data.at("split").value("train", 0.8);
    fr.validation = data.at("split").value("validation", 0.1);
    fr.test = data.at("split").value("test", 0.1);
  }
  std::uint64_t split_seed = data.value("split_seed", 0);

  if (data.contains("synth")) {
    auto spec = synth::SynthSpec::from_json(data.at("synth"));
    return synth::generate(spec, fr);
  }
  if (!data.contains("jsonl")) throw ValidationError("data section needs \"jsonl\" or \"synth\"");
  auto taxonomy = data.contains("taxonomy")
                      ? corpus::TargetTaxonomy::load(data.at("taxonomy").get<std::string>())
                      : corpus::TargetTaxonomy::default_eight();
  std::vector<corpus::CorpusSplit> splits;
  for (const auto& entry : data.at("jsonl")) {
    auto path = entry.at("path").get<std::string>();
    auto platform = corpus::platform_from_name(entry.at("platform").get<std::string>());
    auto posts = corpus::load_dataset(path, platform, taxonomy);
    if (entry.contains("tag"))
      for (auto& p : posts) p.platform_tag = entry.at("tag").get<std::string>();
    splits.push_back(corpus::split_corpus(posts, fr, split_seed));
  }
  return splits;
}

inline const corpus::CorpusSplit& find_split(const std::vector<corpus::CorpusSplit>& splits,
                                             const std::string& tag) {
  for (const auto& s : splits)
    if (s.platform_tag == tag) return s;
  throw ValidationError("no dataset with platform tag: " + tag);
}

inline trainer::TrainConfig train_config_from(const nlohmann::json& cfg) {
  trainer::TrainConfig tc;
  if (cfg.contains("train")) tc = trainer::TrainConfig::from_json(cfg.at("train"));
  try {
    tc.validate();
  } catch (const std::invalid_argument& e) {
    throw ValidationError(e.what());
  }
  return tc;
}

inline std::vector<std::uint64_t> seeds_from(const nlohmann::json& cfg,
                                             std::uint64_t fallback) {
  if (cfg.contains("eval") && cfg.at("eval").contains("seeds"))
    return cfg.at("eval").at("seeds").get<std::vector<std::uint64_t>>();
  return {fallback};
}

// ------------------------------------------------------------------ commands

inline int cmd_prepare_data(const std::string& raw_path, const std::string& platform,
                            const std::string& taxonomy_path, const std::string& out_path,
                            bool force) {
  auto taxonomy = taxonomy_path.empty() ? corpus::TargetTaxonomy::default_eight()
                                        : corpus::TargetTaxonomy::load(taxonomy_path);
  corpus::Platform pf;
  try {
    pf = corpus::platform_from_name(platform);
  } catch (const std::invalid_argument& e) {
    throw ValidationError(e.what());
  }
  std::vector<corpus::Post> posts;
  try {
    posts = corpus::load_dataset(raw_path, pf, taxonomy);
  } catch (const std::runtime_error& e) {
    throw ValidationError(e.what());
  }
  if (posts.empty()) throw ValidationError("input file has no records: " + raw_path);
  if (fs::exists(out_path) && !force)
    throw ValidationError("output exists: " + out_path + " (use --force)");
  corpus::write_jsonl(posts, out_path);
  auto stats = corpus::corpus_stats(posts);
  write_json_file(out_path + ".stats.json", corpus::stats_to_json(stats));
  std::cout << corpus::stats_to_json(stats).dump() << "\n";
  return 0;
}

inline int cmd_train(const nlohmann::json& cfg, const std::string& out_dir, bool force) {
  auto tc = train_config_from(cfg);
  std::string source = cfg.value("source", std::string());
  auto splits = load_data_section(cfg);
  const auto& split = source.empty() ? splits.front() : find_split(splits, source);

  prepare_out_dir(out_dir, force);
  nlohmann::json resolved = cfg;
  resolved["train"] = tc.to_json();
  resolved["source"] = split.platform_tag;
  write_manifest(out_dir, "train", resolved, {tc.seed});

  auto result = trainer::train(split, tc, [](const trainer::EpochRecord& r) {
    std::cout << r.to_json().dump() << "\n";
  });
  write_json_file(fs::path(out_dir) / "report.json", result.report.to_json());
  auto* desk = dynamic_cast<backbone::DeskBackbone*>(&result.model->bb());
  if (desk)
    model::save_model(fs::path(out_dir) / "checkpoint", *result.model, *desk,
                      result.used_max_len, tc.seed);
  return 0;
}

inline void print_matrix(const eval::EvalMatrix& m, std::ostream& os) {
  std::vector<std::string> sources, targets;
  for (const auto& [key, v] : m.cells) {
    if (std::find(sources.begin(), sources.end(), key.first) == sources.end())
      sources.push_back(key.first);
    if (std::find(targets.begin(), targets.end(), key.second) == targets.end())
      targets.push_back(key.second);
  }
  os << "source\\target";
  for (const auto& t : targets) os << "\t" << t;
  os << "\n";
  for (const auto& s : sources) {
    os << s;
    for (const auto& t : targets) {
      char buf[16];
      std::snprintf(buf, sizeof(buf), "%.4f", m.cells.at({s, t}));
      os << "\t" << buf;
    }
    os << "\n";
  }
}

inline int cmd_cross_eval(const nlohmann::json& cfg, const std::string& out_dir, bool force) {
  auto tc = train_config_from(cfg);
  auto splits = load_data_section(cfg);
  std::vector<corpus::CorpusSplit> sources = splits, targets = splits;
  if (cfg.contains("eval")) {
    const auto& e = cfg.at("eval");
    auto pick = [&](const char* key, std::vector<corpus::CorpusSplit>& out) {
      if (!e.contains(key)) return;
      out.clear();
      for (const auto& tag : e.at(key)) out.push_back(find_split(splits, tag));
    };
    pick("sources", sources);
    pick("targets", targets);
  }
  auto seeds = seeds_from(cfg, tc.seed);

  prepare_out_dir(out_dir, force);
  nlohmann::json resolved = cfg;
  resolved["train"] = tc.to_json();
  write_manifest(out_dir, "cross-eval", resolved, seeds);

  auto matrix = eval::cross_eval(sources, targets, tc, seeds);
  write_json_file(fs::path(out_dir) / "eval_matrix.json", matrix.to_json());
  print_matrix(matrix, std::cout);
  return 0;
}

inline int cmd_ablate(const nlohmann::json& cfg, const std::string& out_dir, bool force) {
  auto tc = train_config_from(cfg);
  auto splits = load_data_section(cfg);
  std::string source = cfg.value("source", splits.front().platform_tag);
  const auto& src = find_split(splits, source);
  std::vector<corpus::CorpusSplit> targets;
  for (const auto& s : splits)
    if (s.platform_tag != source) targets.push_back(s);
  if (targets.empty()) targets.push_back(src);
  auto seeds = seeds_from(cfg, tc.seed);

  prepare_out_dir(out_dir, force);
  nlohmann::json resolved = cfg;
  resolved["train"] = tc.to_json();
  resolved["source"] = source;
  write_manifest(out_dir, "ablate", resolved, seeds);

  auto per_variant = eval::ablation_compare(src, targets, tc, seeds);
  nlohmann::json out;
  for (const auto& [variant, matrix] : per_variant) {
    out[variant] = matrix.to_json();
    std::cout << "== " << variant << "\n";
    print_matrix(matrix, std::cout);
  }
  write_json_file(fs::path(out_dir) / "ablation.json", out);
  return 0;
}

inline int cmd_invariance(const nlohmann::json& cfg, const std::string& checkpoint,
                          const std::string& out_dir, bool force) {
  auto splits = load_data_section(cfg);
  model::LoadedModel loaded;
  try {
    loaded = model::load_model(checkpoint);
  } catch (const std::exception& e) {
    throw ValidationError(std::string("cannot load checkpoint: ") + e.what());
  }
  if (!loaded.trained)
    throw ValidationError("checkpoint is untrained; invariance analysis needs a trained model");
  int sample_n = 1000;
  std::uint64_t seed = 0;
  if (cfg.contains("invariance")) {
    sample_n = cfg.at("invariance").value("sample_n", 1000);
    seed = cfg.at("invariance").value("seed", 0);
  }

  prepare_out_dir(out_dir, force);
  nlohmann::json resolved = cfg;
  resolved["checkpoint"] = checkpoint;
  write_manifest(out_dir, "invariance", resolved, {seed});

  auto rep = eval::invariance_analysis(*loaded.model, splits, loaded.max_len, sample_n, seed);
  write_json_file(fs::path(out_dir) / "invariance.json", rep.to_json());
  eval::write_projection_csv(rep, (fs::path(out_dir) / "projection.csv").string());
  std::cout << rep.to_json().dump(2) << "\n";
  return 0;
}

inline int cmd_synth(const std::string& spec_path, const std::string& out_dir, bool force) {
  auto spec_json = read_json_file(spec_path);
  synth::SynthSpec spec;
  try {
    spec = synth::SynthSpec::from_json(spec_json);
    spec.validate();
  } catch (const std::exception& e) {
    throw ValidationError(std::string("invalid synth spec: ") + e.what());
  }
  prepare_out_dir(out_dir, force);
  write_manifest(out_dir, "synth", spec.to_json(), {spec.seed});

  auto platforms = synth::generate_posts(spec);
  nlohmann::json sidecar;
  for (std::size_t p = 0; p < platforms.size(); ++p) {
    std::string tag = "synth-" + std::to_string(p);
    corpus::write_jsonl(platforms[p], (fs::path(out_dir) / (tag + ".jsonl")).string());
    auto stats = corpus::corpus_stats(platforms[p]);
    sidecar[tag] = corpus::stats_to_json(stats);
    sidecar[tag]["oracle_f1"] = synth::oracle_f1(platforms[p]);
  }
  write_json_file(fs::path(out_dir) / "stats.json", sidecar);
  std::cout << sidecar.dump(2) << "\n";
  return 0;
}

// ------------------------------------------------------------------ errors

inline int run_guarded(const std::function<int()>& fn) {
  try {
    return fn();
  } catch (const ValidationError& e) {
    std::cerr << nlohmann::json{{"kind", "validation"}, {"error", e.what()}}.dump() << "\n";
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << nlohmann::json{{"kind", "validation"}, {"error", e.what()}}.dump() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << nlohmann::json{{"kind", "runtime"}, {"error", e.what()}}.dump() << "\n";
    return 2;
  }
}

}  // namespace catchd::cli
