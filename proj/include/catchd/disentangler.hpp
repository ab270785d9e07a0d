#pragma once

// Splits the encoder embedding into a continuous causal latent (Gaussian,
// reparameterized) and a discrete-relaxed target latent (Gumbel-Softmax),
// reconstructs the embedding from their concatenation, and computes the VAE
// loss terms.
//
// Sign note: the latent KL terms enter the minimized objective with positive
// sign, i.e. the standard ELBO penalty pulling posteriors toward their
// priors (N(0, I) for the causal latent, uniform categorical for the target
// latent). A config switch flips them for experimentation.

#include <cmath>
#include <optional>
#include <stdexcept>
#include <vector>

#include "catchd/backbone.hpp"
#include "catchd/core/autodiff.hpp"
#include "catchd/core/params.hpp"
#include "catchd/core/rng.hpp"

namespace catchd::disentangler {

using ad::Mat;
using ad::Var;

struct GaussianParams {
  Var mu;       // B x h_causal
  Var log_var;  // B x h_causal, clamped to [-10, 10]
};

struct CategoricalParams {
  Var logits;  // B x h_disc
  Var pi;      // softmax of logits, rows on the simplex
};

struct LatentPair {
  Var x_c;
  Var x_t;
  double tau = 0.5;
};

// all six scalar loss terms, kept separately for ablations and tests
struct LossBreakdown {
  double recon = 0, kl_causal = 0, kl_target = 0, ce_target = 0, ce_hate = 0;
  double vae_total = 0, combined = 0;
};

struct LossCoeffs {
  double alpha_t = 0.05;
  double alpha_c = 0.05;
  double alpha_tc = 0.001;
  double mu_d = 0.5;
  bool flip_kl_sign = false;  // the literal (non-standard) reading of the latent losses
};

// L_VAE = recon + alpha_t * (kl_t + alpha_tc * ce_t) + alpha_c * kl_c,
// composed in exactly this order so breakdown fields recombine bitwise.
inline double vae_loss(double recon, double kl_c, double kl_t, double ce_t,
                       const LossCoeffs& k) {
  double sgn = k.flip_kl_sign ? -1.0 : 1.0;
  return recon + k.alpha_t * (sgn * kl_t + k.alpha_tc * ce_t) + k.alpha_c * (sgn * kl_c);
}

// L = L_hate + mu_d * L_VAE
inline double combined_loss(double hate, double vae, double mu_d) {
  return hate + mu_d * vae;
}

struct DisentanglerConfig {
  int h_d = 64;
  int h_causal = 16;
  int h_disc = 8;  // equals the target-class count so argmax(x_t) is a label
  double tau = 0.5;
  double log_var_clamp = 10.0;
};

class Disentangler {
 public:
  Disentangler(const DisentanglerConfig& cfg, std::uint64_t init_seed) : cfg_(cfg) {
    rng::Stream init(init_seed, "disentangler-init");
    fc_mu_w_ = ps_.add("fc_mu.w", core::glorot(init, cfg.h_d, cfg.h_causal));
    fc_mu_b_ = ps_.add("fc_mu.b", Mat::Zero(1, cfg.h_causal));
    fc_lv_w_ = ps_.add("fc_sigma.w", core::glorot(init, cfg.h_d, cfg.h_causal));
    fc_lv_b_ = ps_.add("fc_sigma.b", Mat::Zero(1, cfg.h_causal));
    fc_pi_w_ = ps_.add("fc_pi.w", core::glorot(init, cfg.h_d, cfg.h_disc));
    fc_pi_b_ = ps_.add("fc_pi.b", Mat::Zero(1, cfg.h_disc));
    fc_zhat_w_ = ps_.add("fc_zhat.w", core::glorot(init, cfg.h_causal + cfg.h_disc, cfg.h_d));
    fc_zhat_b_ = ps_.add("fc_zhat.b", Mat::Zero(1, cfg.h_d));
  }

  // x_c = mu + exp(log_var / 2) .* eps
  std::pair<GaussianParams, Var> gaussian_branch(const Var& z_cls,
                                                 std::optional<Mat> noise,
                                                 rng::Stream* eps_stream = nullptr) const {
    GaussianParams p;
    p.mu = ad::add_rowvec(ad::matmul(z_cls, fc_mu_w_), fc_mu_b_);
    p.log_var = ad::clamp(ad::add_rowvec(ad::matmul(z_cls, fc_lv_w_), fc_lv_b_),
                          -cfg_.log_var_clamp, cfg_.log_var_clamp);
    Mat eps;
    if (noise) {
      eps = std::move(*noise);
      if (eps.rows() != p.mu->val.rows() || eps.cols() != p.mu->val.cols())
        throw std::invalid_argument("gaussian_branch: noise shape mismatch");
    } else if (eps_stream) {
      eps = eps_stream->normal_matrix(p.mu->val.rows(), p.mu->val.cols());
    } else {
      eps = Mat::Zero(p.mu->val.rows(), p.mu->val.cols());
    }
    Var sigma = ad::vexp(ad::scale(p.log_var, 0.5));
    Var x_c = ad::add(p.mu, ad::mul(sigma, ad::constant(std::move(eps))));
    return {p, x_c};
  }

  // x_t_i = exp((log pi_i + g_i) / tau) / sum_j exp((log pi_j + g_j) / tau)
  std::pair<CategoricalParams, Var> gumbel_branch(const Var& z_cls, double tau,
                                                  std::optional<Mat> gumbel_noise,
                                                  rng::Stream* g_stream = nullptr) const {
    if (tau <= 0.0) throw std::invalid_argument("gumbel_branch: tau must be positive");
    CategoricalParams p;
    p.logits = ad::add_rowvec(ad::matmul(z_cls, fc_pi_w_), fc_pi_b_);
    p.pi = ad::softmax_rows(p.logits);
    Var log_pi = ad::log_softmax_rows(p.logits);
    Mat g;
    if (gumbel_noise) {
      g = std::move(*gumbel_noise);
      if (g.rows() != log_pi->val.rows() || g.cols() != log_pi->val.cols())
        throw std::invalid_argument("gumbel_branch: noise shape mismatch");
    } else if (g_stream) {
      g = g_stream->gumbel_matrix(log_pi->val.rows(), log_pi->val.cols());
    } else {
      g = Mat::Zero(log_pi->val.rows(), log_pi->val.cols());
    }
    Var x_t = ad::softmax_rows(
        ad::scale(ad::add(log_pi, ad::constant(std::move(g))), 1.0 / tau));
    return {p, x_t};
  }

  // z_hat = FC_zhat([x_c || x_t]); logits from the teacher-forced decoder
  std::pair<Var, std::vector<Var>> reconstruct(const Var& x_c, const Var& x_t,
                                               const backbone::TokenBatch& teacher,
                                               backbone::Backbone& bb, bool train,
                                               rng::Stream* drop) const {
    if (x_c->val.cols() + x_t->val.cols() != fc_zhat_w_->val.rows())
      throw std::invalid_argument("reconstruct: latent width mismatch");
    Var z_hat = ad::add_rowvec(ad::matmul(ad::hstack({x_c, x_t}), fc_zhat_w_), fc_zhat_b_);
    return {z_hat, bb.decode(z_hat, teacher, train, drop)};
  }

  const DisentanglerConfig& config() const { return cfg_; }
  void set_tau(double tau) {
    if (tau <= 0.0) throw std::invalid_argument("set_tau: tau must be positive");
    cfg_.tau = tau;
  }
  core::ParamSet& params() { return ps_; }

 private:
  DisentanglerConfig cfg_;
  core::ParamSet ps_;
  Var fc_mu_w_, fc_mu_b_, fc_lv_w_, fc_lv_b_, fc_pi_w_, fc_pi_b_, fc_zhat_w_, fc_zhat_b_;
};

// ------------------------------------------------------------------ losses

// token-level cross-entropy, summed over unmasked positions, batch mean
inline Var recon_loss(const std::vector<Var>& logits, const backbone::TokenBatch& targets) {
  if (static_cast<Eigen::Index>(logits.size()) != targets.batch())
    throw std::invalid_argument("recon_loss: batch size mismatch");
  std::vector<Var> per_example;
  per_example.reserve(logits.size());
  for (Eigen::Index ex = 0; ex < targets.batch(); ++ex) {
    Var logp = ad::log_softmax_rows(logits[static_cast<std::size_t>(ex)]);
    std::vector<int> tgt(static_cast<std::size_t>(targets.seq_len()));
    std::vector<double> w(static_cast<std::size_t>(targets.seq_len()));
    for (Eigen::Index i = 0; i < targets.seq_len(); ++i) {
      tgt[static_cast<std::size_t>(i)] = targets.ids(ex, i);
      w[static_cast<std::size_t>(i)] = targets.mask(ex, i);
    }
    per_example.push_back(ad::weighted_nll(logp, std::move(tgt), std::move(w)));
  }
  return ad::scale(ad::sum(ad::vstack(per_example)), 1.0 / static_cast<double>(logits.size()));
}

// KL(N(mu, diag sigma^2) || N(0, I)) = 1/2 sum(mu^2 + sigma^2 - 1 - log sigma^2),
// batch mean
inline Var kl_causal(const GaussianParams& p) {
  Var var = ad::vexp(p.log_var);
  Var term = ad::add_scalar(ad::add(ad::mul(p.mu, p.mu), ad::sub(var, p.log_var)), -1.0);
  return ad::scale(ad::sum(term), 0.5 / static_cast<double>(p.mu->val.rows()));
}

// KL(Cat(pi) || Uniform(K)) = sum pi_i (log pi_i + log K), batch mean
inline Var kl_target(const CategoricalParams& p) {
  double log_k = std::log(static_cast<double>(p.logits->val.cols()));
  Var log_pi = ad::log_softmax_rows(p.logits);
  Var term = ad::mul(p.pi, ad::add_scalar(log_pi, log_k));
  return ad::scale(ad::sum(term), 1.0 / static_cast<double>(p.logits->val.rows()));
}

// cross-entropy of the soft relaxed sample against the true target class;
// argmax(x_t) is the hard prediction reported at eval time
inline Var target_ce(const Var& x_t, const std::vector<int>& t) {
  const auto B = x_t->val.rows();
  if (static_cast<Eigen::Index>(t.size()) != B)
    throw std::invalid_argument("target_ce: batch size mismatch");
  for (int ti : t)
    if (ti < 0 || ti >= x_t->val.cols())
      throw std::invalid_argument("target_ce: target label out of range");
  Var log_xt = ad::vlog(x_t);
  return ad::scale(ad::weighted_nll(log_xt, t, std::vector<double>(t.size(), 1.0)),
                   1.0 / static_cast<double>(B));
}

inline int argmax_row(const Mat& m, Eigen::Index r) {
  Eigen::Index idx = 0;
  m.row(r).maxCoeff(&idx);
  return static_cast<int>(idx);
}

}  // namespace catchd::disentangler
