#pragma once

// Save/load a trained model as a checkpoint directory. The manifest carries
// enough (backbone config, vocabulary, latent dims, max_len) to rebuild the
// model and load the weights back.

#include <filesystem>
#include <memory>

#include "catchd/core/checkpoint.hpp"
#include "catchd/model.hpp"

namespace catchd::model {

struct LoadedModel {
  std::shared_ptr<CatchModel> model;
  int max_len = 0;
  bool trained = false;
};

inline void save_model(const std::filesystem::path& dir, CatchModel& m,
                       const backbone::DeskBackbone& bb, int used_max_len,
                       std::uint64_t seed, bool trained = true) {
  nlohmann::json cfg;
  cfg["backbone"] = bb.config().to_json();
  cfg["vocab"] = bb.vocab().to_json();
  const auto& d = m.disent().config();
  cfg["disentangler"] = {{"h_causal", d.h_causal}, {"h_disc", d.h_disc}, {"tau", d.tau}};
  cfg["max_len"] = used_max_len;
  cfg["trained"] = trained;
  core::save_checkpoint(dir, m.params(), cfg, seed);
}

inline LoadedModel load_model(const std::filesystem::path& dir) {
  auto manifest = core::read_checkpoint_manifest(dir);
  const auto& cfg = manifest.at("config");
  auto bcfg = backbone::BackboneConfig::from_json(cfg.at("backbone"));
  auto vocab = backbone::Vocab::from_json(cfg.at("vocab"));
  auto bb = std::make_shared<backbone::DeskBackbone>(bcfg, std::move(vocab),
                                                     manifest.at("seed").get<std::uint64_t>());
  disentangler::DisentanglerConfig dcfg;
  dcfg.h_d = bcfg.h_d;
  dcfg.h_causal = cfg.at("disentangler").at("h_causal");
  dcfg.h_disc = cfg.at("disentangler").at("h_disc");
  dcfg.tau = cfg.at("disentangler").at("tau");
  LoadedModel out;
  out.model = std::make_shared<CatchModel>(bb, dcfg, manifest.at("seed").get<std::uint64_t>());
  core::load_checkpoint(dir, out.model->params());
  out.max_len = cfg.at("max_len");
  out.trained = cfg.value("trained", true);
  return out;
}

}  // namespace catchd::model
