#pragma once

// Full model: backbone encoder -> dual-latent disentangler -> hate head on
// the causal latent, plus the teacher-forced reconstruction path. The hate
// head never sees the target latent.

#include <memory>
#include <optional>
#include <vector>

#include "catchd/backbone.hpp"
#include "catchd/core/autodiff.hpp"
#include "catchd/disentangler.hpp"

namespace catchd::model {

using ad::Mat;
using ad::Var;
using disentangler::LossBreakdown;
using disentangler::LossCoeffs;

enum class Ablation {
  full,
  no_hate_and_target_loss,
  no_finetune,
  no_hate_loss,
  no_target_loss,
};

inline const char* ablation_name(Ablation a) {
  switch (a) {
    case Ablation::full: return "full";
    case Ablation::no_hate_and_target_loss: return "no_hate_and_target_loss";
    case Ablation::no_finetune: return "no_finetune";
    case Ablation::no_hate_loss: return "no_hate_loss";
    case Ablation::no_target_loss: return "no_target_loss";
  }
  return "?";
}

inline Ablation ablation_from_name(const std::string& s) {
  for (Ablation a : {Ablation::full, Ablation::no_hate_and_target_loss, Ablation::no_finetune,
                     Ablation::no_hate_loss, Ablation::no_target_loss})
    if (s == ablation_name(a)) return a;
  throw std::invalid_argument("unknown ablation: " + s);
}

// y_hat = softmax(FC_h(x_c))
class HateHead {
 public:
  HateHead(int h_causal, std::uint64_t init_seed) {
    rng::Stream init(init_seed, "hate-head-init");
    w_ = ps_.add("fc_hate.w", core::glorot(init, h_causal, 2));
    b_ = ps_.add("fc_hate.b", Mat::Zero(1, 2));
  }

  Var logits(const Var& x_c) const { return ad::add_rowvec(ad::matmul(x_c, w_), b_); }
  Var probs(const Var& x_c) const { return ad::softmax_rows(logits(x_c)); }

  core::ParamSet& params() { return ps_; }

 private:
  core::ParamSet ps_;
  Var w_, b_;
};

// mean binary cross-entropy against hard labels, computed from logits
inline Var hate_loss_from_logits(const Var& logits, const std::vector<int>& y) {
  Var logp = ad::log_softmax_rows(logits);
  return ad::scale(ad::weighted_nll(logp, y, std::vector<double>(y.size(), 1.0)),
                   1.0 / static_cast<double>(y.size()));
}

struct ForwardResult {
  LossBreakdown losses;           // scalar values
  Var combined;                   // graph scalar for backprop
  Var x_c, x_t, z_cls;            // latents for probes
  disentangler::GaussianParams gauss;
  disentangler::CategoricalParams cat;
  std::vector<int> hate_pred;     // argmax of hate head
  std::vector<int> target_pred;   // argmax of x_t
};

struct NoiseOverride {
  std::optional<Mat> eps;     // Gaussian noise for x_c
  std::optional<Mat> gumbel;  // Gumbel noise for x_t
};

class CatchModel {
 public:
  CatchModel(std::shared_ptr<backbone::Backbone> bb, disentangler::DisentanglerConfig dcfg,
             std::uint64_t init_seed)
      : backbone_(std::move(bb)),
        disent_(dcfg, init_seed),
        head_(dcfg.h_causal, init_seed) {
    all_ps_.append(backbone_->params());
    all_ps_.append(disent_.params());
    all_ps_.append(head_.params());
  }

  // One full pass: encode, disentangle, reconstruct, and every loss term.
  // In eval mode (train=false) both noise sources default to zero and
  // dropout is off, so the pass is deterministic.
  ForwardResult forward(const backbone::TokenBatch& batch, const std::vector<int>& y,
                        const std::vector<int>& t, const LossCoeffs& coeffs,
                        Ablation ablation, bool train, rng::Stream* eps_stream,
                        rng::Stream* gumbel_stream, rng::Stream* drop_stream,
                        NoiseOverride noise = {}) {
    ForwardResult r;
    auto enc = backbone_->encode(batch, train, drop_stream);
    r.z_cls = enc.z_cls;

    auto [gauss, x_c] = disent_.gaussian_branch(
        r.z_cls, std::move(noise.eps), train ? eps_stream : nullptr);
    auto [cat, x_t] = disent_.gumbel_branch(r.z_cls, disent_.config().tau,
                                            std::move(noise.gumbel),
                                            train ? gumbel_stream : nullptr);
    r.gauss = gauss;
    r.cat = cat;
    r.x_c = x_c;
    r.x_t = x_t;

    auto [z_hat, logits] = disent_.reconstruct(x_c, x_t, batch, *backbone_, train, drop_stream);
    Var recon = disentangler::recon_loss(logits, batch);
    Var kl_c = disentangler::kl_causal(gauss);
    Var kl_t = disentangler::kl_target(cat);
    Var ce_t = disentangler::target_ce(x_t, t);
    Var hate_logits = head_.logits(x_c);
    Var ce_h = hate_loss_from_logits(hate_logits, y);

    LossCoeffs k = coeffs;
    bool drop_hate = ablation == Ablation::no_hate_loss ||
                     ablation == Ablation::no_hate_and_target_loss;
    bool drop_target = ablation == Ablation::no_target_loss ||
                       ablation == Ablation::no_hate_and_target_loss;
    if (drop_target) k.alpha_tc = 0.0;

    r.losses.recon = recon->scalar();
    r.losses.kl_causal = kl_c->scalar();
    r.losses.kl_target = kl_t->scalar();
    r.losses.ce_target = ce_t->scalar();
    r.losses.ce_hate = drop_hate ? 0.0 : ce_h->scalar();
    r.losses.vae_total = disentangler::vae_loss(r.losses.recon, r.losses.kl_causal,
                                                r.losses.kl_target, r.losses.ce_target, k);
    r.losses.combined =
        disentangler::combined_loss(r.losses.ce_hate, r.losses.vae_total, k.mu_d);

    // graph-side composition mirrors the scalar one
    double sgn = k.flip_kl_sign ? -1.0 : 1.0;
    Var vae = ad::add(recon, ad::add(ad::scale(ad::add(ad::scale(kl_t, sgn),
                                                       ad::scale(ce_t, k.alpha_tc)),
                                               k.alpha_t),
                                     ad::scale(kl_c, sgn * k.alpha_c)));
    r.combined = drop_hate ? ad::scale(vae, k.mu_d)
                           : ad::add(ce_h, ad::scale(vae, k.mu_d));

    Mat hp = ad::softmax_rows_val(hate_logits->val);
    for (Eigen::Index b = 0; b < hp.rows(); ++b) {
      r.hate_pred.push_back(disentangler::argmax_row(hp, b));
      r.target_pred.push_back(disentangler::argmax_row(x_t->val, b));
    }
    return r;
  }

  // deterministic causal-mean latents and raw embeddings for analysis
  std::pair<Mat, Mat> latents_for_analysis(const backbone::TokenBatch& batch) {
    auto enc = backbone_->encode(batch, false, nullptr);
    auto [gauss, x_c] = disent_.gaussian_branch(enc.z_cls, std::nullopt, nullptr);
    return {gauss.mu->val, enc.z_cls->val};
  }

  std::vector<int> predict_hate(const backbone::TokenBatch& batch) {
    auto enc = backbone_->encode(batch, false, nullptr);
    auto [gauss, x_c] = disent_.gaussian_branch(enc.z_cls, std::nullopt, nullptr);
    Mat hp = ad::softmax_rows_val(head_.logits(gauss.mu)->val);
    std::vector<int> out;
    for (Eigen::Index b = 0; b < hp.rows(); ++b)
      out.push_back(disentangler::argmax_row(hp, b));
    return out;
  }

  backbone::Backbone& bb() { return *backbone_; }
  disentangler::Disentangler& disent() { return disent_; }
  HateHead& head() { return head_; }
  core::ParamSet& params() { return all_ps_; }

 private:
  std::shared_ptr<backbone::Backbone> backbone_;
  disentangler::Disentangler disent_;
  HateHead head_;
  core::ParamSet all_ps_;
};

// Baseline without disentanglement: hate head directly on the raw embedding.
class ZOnlyModel {
 public:
  ZOnlyModel(std::shared_ptr<backbone::Backbone> bb, std::uint64_t init_seed)
      : backbone_(std::move(bb)), head_(backbone_->h_d(), init_seed) {
    all_ps_.append(backbone_->params());
    all_ps_.append(head_.params());
  }

  std::pair<Var, std::vector<int>> forward(const backbone::TokenBatch& batch,
                                           const std::vector<int>& y, bool train,
                                           rng::Stream* drop_stream) {
    auto enc = backbone_->encode(batch, train, drop_stream);
    Var logits = head_.logits(enc.z_cls);
    Var loss = hate_loss_from_logits(logits, y);
    Mat hp = ad::softmax_rows_val(logits->val);
    std::vector<int> pred;
    for (Eigen::Index b = 0; b < hp.rows(); ++b)
      pred.push_back(disentangler::argmax_row(hp, b));
    return {loss, pred};
  }

  std::vector<int> predict_hate(const backbone::TokenBatch& batch) {
    auto enc = backbone_->encode(batch, false, nullptr);
    Mat hp = ad::softmax_rows_val(head_.logits(enc.z_cls)->val);
    std::vector<int> out;
    for (Eigen::Index b = 0; b < hp.rows(); ++b)
      out.push_back(disentangler::argmax_row(hp, b));
    return out;
  }

  backbone::Backbone& bb() { return *backbone_; }
  core::ParamSet& params() { return all_ps_; }

 private:
  std::shared_ptr<backbone::Backbone> backbone_;
  HateHead head_;
  core::ParamSet all_ps_;
};

}  // namespace catchd::model
