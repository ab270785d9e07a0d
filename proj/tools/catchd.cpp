// Command-line front end: data preparation, training, cross-platform
// evaluation, ablations, invariance analysis, and synthetic corpus
// generation.

#include <CLI11.hpp>

#include "catchd/cli.hpp"

namespace cli = catchd::cli;

int main(int argc, char** argv) {
  CLI::App app{"cross-platform hate speech detection via causal disentanglement"};
  app.require_subcommand(1);

  bool force = false;
  app.add_flag("--force", force, "overwrite existing outputs");

  // prepare-data
  auto* prep = app.add_subcommand("prepare-data", "convert a raw JSONL file to canonical form");
  std::string raw_path, platform, taxonomy_path, out_path;
  prep->add_option("--input", raw_path, "raw JSONL file")->required();
  prep->add_option("--platform", platform, "GAB|Reddit|Twitter|YouTube|synth-*")->required();
  prep->add_option("--taxonomy", taxonomy_path, "taxonomy mapping JSON (default: eight classes)");
  prep->add_option("--output", out_path, "canonical JSONL output path")->required();

  // config-driven commands
  std::string config_path, out_dir, from_manifest, checkpoint;
  auto add_config_opts = [&](CLI::App* cmd, bool manifest_opt = true) {
    cmd->add_option("--config", config_path, "config JSON file");
    cmd->add_option("--out", out_dir, "output directory")->required();
    if (manifest_opt)
      cmd->add_option("--from-manifest", from_manifest,
                      "replay: read the resolved config from a prior RunManifest");
  };
  auto* train = app.add_subcommand("train", "train one model on one source platform");
  add_config_opts(train);
  auto* xeval = app.add_subcommand("cross-eval", "source x target macro-F1 matrix");
  add_config_opts(xeval);
  auto* ablate = app.add_subcommand("ablate", "run the full model and the four ablations");
  add_config_opts(ablate);
  auto* invar = app.add_subcommand("invariance", "latent invariance analysis of a checkpoint");
  add_config_opts(invar, false);
  invar->add_option("--checkpoint", checkpoint, "checkpoint directory")->required();

  auto* synth = app.add_subcommand("synth", "generate synthetic platform corpora");
  std::string spec_path;
  synth->add_option("--spec", spec_path, "synthetic spec JSON")->required();
  synth->add_option("--out", out_dir, "output directory")->required();

  CLI11_PARSE(app, argc, argv);

  auto resolve_config = [&]() {
    if (!from_manifest.empty()) {
      auto manifest = cli::read_json_file(from_manifest);
      if (!manifest.contains("config"))
        throw cli::ValidationError("manifest has no \"config\" section: " + from_manifest);
      return manifest.at("config");
    }
    if (config_path.empty())
      throw cli::ValidationError("either --config or --from-manifest is required");
    return cli::read_json_file(config_path);
  };

  return cli::run_guarded([&]() -> int {
    if (prep->parsed())
      return cli::cmd_prepare_data(raw_path, platform, taxonomy_path, out_path, force);
    if (train->parsed()) return cli::cmd_train(resolve_config(), out_dir, force);
    if (xeval->parsed()) return cli::cmd_cross_eval(resolve_config(), out_dir, force);
    if (ablate->parsed()) return cli::cmd_ablate(resolve_config(), out_dir, force);
    if (invar->parsed())
      return cli::cmd_invariance(resolve_config(), checkpoint, out_dir, force);
    if (synth->parsed()) return cli::cmd_synth(spec_path, out_dir, force);
    return 1;
  });
}
