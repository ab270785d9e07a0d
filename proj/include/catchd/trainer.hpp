#pragma once

// Multi-task training loop: AdamW on the combined objective, validation
// macro-F1 early stopping, gradient clipping, and the four ablation switches.

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "catchd/corpus.hpp"
#include "catchd/metrics.hpp"
#include "catchd/model.hpp"

namespace catchd::trainer {

using corpus::CorpusSplit;
using corpus::Post;
using disentangler::LossBreakdown;
using model::Ablation;

struct TrainConfig {
  double learning_rate = 0.0001;
  double dropout = 0.2;
  double alpha_t = 0.05;
  double alpha_c = 0.05;
  double alpha_tc = 0.001;
  double mu_d = 0.5;
  double tau = 0.5;
  int h_causal = 16;
  int h_disc = 8;
  int h_d = 64;
  int n_layers = 2;
  int n_heads = 4;
  int max_len = 128;
  int batch_size = 32;
  int max_epochs = 30;
  int patience = 3;
  std::uint64_t seed = 0;
  Ablation ablation = Ablation::full;
  bool anneal_tau = false;
  double anneal_rate = 0.01;
  bool flip_kl_sign = false;
  double weight_decay = 0.01;
  double grad_clip = 1.0;  // <= 0 disables
  std::size_t max_vocab_words = 20000;

  void validate() const {
    std::vector<std::string> errs;
    if (learning_rate <= 0) errs.push_back("learning_rate must be > 0");
    if (dropout < 0 || dropout >= 1) errs.push_back("dropout must be in [0, 1)");
    for (auto [v, n] : {std::pair{alpha_t, "alpha_t"}, {alpha_c, "alpha_c"},
                        {alpha_tc, "alpha_tc"}, {mu_d, "mu_d"}})
      if (v < 0) errs.push_back(std::string(n) + " must be >= 0");
    if (tau <= 0) errs.push_back("tau must be > 0");
    if (patience < 1) errs.push_back("patience must be >= 1");
    if (batch_size < 1) errs.push_back("batch_size must be >= 1");
    if (max_epochs < 1) errs.push_back("max_epochs must be >= 1");
    if (h_d % n_heads != 0) errs.push_back("h_d must be divisible by n_heads");
    if (!errs.empty()) {
      std::string msg = "invalid config:";
      for (const auto& e : errs) msg += "\n  - " + e;
      throw std::invalid_argument(msg);
    }
  }

  disentangler::LossCoeffs coeffs() const {
    return {alpha_t, alpha_c, alpha_tc, mu_d, flip_kl_sign};
  }

  nlohmann::json to_json() const {
    return {{"learning_rate", learning_rate},
            {"dropout", dropout},
            {"alpha_t", alpha_t},
            {"alpha_c", alpha_c},
            {"alpha_tc", alpha_tc},
            {"mu_d", mu_d},
            {"tau", tau},
            {"h_causal", h_causal},
            {"h_disc", h_disc},
            {"h_d", h_d},
            {"n_layers", n_layers},
            {"n_heads", n_heads},
            {"max_len", max_len},
            {"batch_size", batch_size},
            {"max_epochs", max_epochs},
            {"patience", patience},
            {"seed", seed},
            {"ablation", model::ablation_name(ablation)},
            {"anneal_tau", anneal_tau},
            {"anneal_rate", anneal_rate},
            {"flip_kl_sign", flip_kl_sign},
            {"weight_decay", weight_decay},
            {"grad_clip", grad_clip},
            {"max_vocab_words", max_vocab_words}};
  }

  static TrainConfig from_json(const nlohmann::json& j) {
    TrainConfig c;
    auto get = [&](const char* k, auto& field) {
      if (j.contains(k)) field = j.at(k).template get<std::decay_t<decltype(field)>>();
    };
    get("learning_rate", c.learning_rate);
    get("dropout", c.dropout);
    get("alpha_t", c.alpha_t);
    get("alpha_c", c.alpha_c);
    get("alpha_tc", c.alpha_tc);
    get("mu_d", c.mu_d);
    get("tau", c.tau);
    get("h_causal", c.h_causal);
    get("h_disc", c.h_disc);
    get("h_d", c.h_d);
    get("n_layers", c.n_layers);
    get("n_heads", c.n_heads);
    get("max_len", c.max_len);
    get("batch_size", c.batch_size);
    get("max_epochs", c.max_epochs);
    get("patience", c.patience);
    get("seed", c.seed);
    if (j.contains("ablation"))
      c.ablation = model::ablation_from_name(j.at("ablation").get<std::string>());
    get("anneal_tau", c.anneal_tau);
    get("anneal_rate", c.anneal_rate);
    get("flip_kl_sign", c.flip_kl_sign);
    get("weight_decay", c.weight_decay);
    get("grad_clip", c.grad_clip);
    get("max_vocab_words", c.max_vocab_words);
    return c;
  }
};

struct EpochRecord {
  int epoch = 0;
  LossBreakdown mean_losses;
  double val_macro_f1 = 0.0;

  nlohmann::json to_json() const {
    return {{"epoch", epoch},
            {"recon", mean_losses.recon},
            {"kl_causal", mean_losses.kl_causal},
            {"kl_target", mean_losses.kl_target},
            {"ce_target", mean_losses.ce_target},
            {"ce_hate", mean_losses.ce_hate},
            {"vae_total", mean_losses.vae_total},
            {"combined", mean_losses.combined},
            {"val_macro_f1", val_macro_f1}};
  }
};

struct TrainReport {
  std::vector<EpochRecord> history;
  double best_val_macro_f1 = 0.0;
  int best_epoch = 0;
  int stopping_epoch = 0;
  nlohmann::json config_echo;

  nlohmann::json to_json() const {
    nlohmann::json h = nlohmann::json::array();
    for (const auto& e : history) h.push_back(e.to_json());
    return {{"history", h},
            {"best_val_macro_f1", best_val_macro_f1},
            {"best_epoch", best_epoch},
            {"stopping_epoch", stopping_epoch},
            {"config", config_echo}};
  }
};

// decoupled weight decay Adam; skips parameters in the frozen set
class AdamW {
 public:
  AdamW(core::ParamSet& params, double lr, double weight_decay)
      : params_(params), lr_(lr), wd_(weight_decay) {
    for (const auto& [n, v] : params.items()) {
      m_.push_back(ad::Mat::Zero(v->val.rows(), v->val.cols()));
      v_.push_back(ad::Mat::Zero(v->val.rows(), v->val.cols()));
    }
  }

  void freeze(const core::ParamSet& ps) {
    for (const auto& [n, v] : ps.items()) frozen_.insert(v.get());
  }

  void step() {
    ++t_;
    double bc1 = 1.0 - std::pow(beta1_, t_);
    double bc2 = 1.0 - std::pow(beta2_, t_);
    std::size_t i = 0;
    for (const auto& [n, p] : params_.items()) {
      if (!frozen_.contains(p.get())) {
        m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * p->grad;
        v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * p->grad.cwiseProduct(p->grad);
        ad::Mat mhat = m_[i] / bc1;
        ad::Mat vhat = v_[i] / bc2;
        p->val -= lr_ * (mhat.array() / (vhat.array().sqrt() + eps_)).matrix();
        if (wd_ > 0) p->val -= lr_ * wd_ * p->val;
      }
      ++i;
    }
  }

  void clip_grads(double max_norm) {
    double sq = 0.0;
    for (const auto& [n, p] : params_.items())
      if (!frozen_.contains(p.get())) sq += p->grad.squaredNorm();
    double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0) {
      double s = max_norm / norm;
      for (const auto& [n, p] : params_.items())
        if (!frozen_.contains(p.get())) p->grad *= s;
    }
  }

 private:
  core::ParamSet& params_;
  double lr_, wd_;
  double beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  long t_ = 0;
  std::vector<ad::Mat> m_, v_;
  std::set<const ad::Node*> frozen_;
};

// ------------------------------------------------------------------ batching

struct Batch {
  backbone::TokenBatch tokens;
  std::vector<int> y, t;
};

inline std::vector<Batch> make_batches(const std::vector<Post>& posts,
                                       backbone::Backbone& bb, int max_len, int batch_size,
                                       rng::Stream* shuffle) {
  std::vector<std::size_t> order(posts.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  if (shuffle) std::shuffle(order.begin(), order.end(), shuffle->engine());
  std::vector<Batch> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    std::size_t end = std::min(order.size(), start + batch_size);
    std::vector<std::string> texts;
    Batch b;
    for (std::size_t i = start; i < end; ++i) {
      texts.push_back(posts[order[i]].text);
      b.y.push_back(posts[order[i]].hate_label);
      b.t.push_back(posts[order[i]].target_label);
    }
    b.tokens = bb.tokenize(texts, max_len);
    batches.push_back(std::move(b));
  }
  return batches;
}

// longest tokenized post (plus start token) across the split, capped by config
inline int effective_max_len(const CorpusSplit& split, const backbone::Vocab& vocab,
                             int cap) {
  std::size_t longest = 2;
  for (const auto* part : {&split.train, &split.validation, &split.test})
    for (const auto& p : *part) {
      std::vector<int> ids{backbone::Vocab::kCls};
      for (const auto& w : backbone::Vocab::split_ws(p.text)) vocab.encode_word(w, ids);
      longest = std::max(longest, ids.size());
    }
  return static_cast<int>(std::min<std::size_t>(longest, static_cast<std::size_t>(cap)));
}

inline std::shared_ptr<backbone::DeskBackbone> make_desk_backbone(const CorpusSplit& split,
                                                                  const TrainConfig& cfg) {
  std::vector<std::string> texts;
  for (const auto& p : split.train) texts.push_back(p.text);
  auto vocab = backbone::Vocab::build(texts, cfg.max_vocab_words);
  backbone::BackboneConfig bcfg;
  bcfg.vocab_size = vocab.size();
  bcfg.h_d = cfg.h_d;
  bcfg.n_layers = cfg.n_layers;
  bcfg.n_heads = cfg.n_heads;
  bcfg.max_len = cfg.max_len;
  bcfg.dropout = cfg.dropout;
  return std::make_shared<backbone::DeskBackbone>(bcfg, std::move(vocab), cfg.seed);
}

struct TrainResult {
  TrainReport report;
  std::shared_ptr<model::CatchModel> model;
  int used_max_len = 0;
};

inline double evaluate_macro_f1(model::CatchModel& m, const std::vector<Post>& posts,
                                int max_len, int batch_size) {
  std::vector<int> y_true, y_pred;
  for (std::size_t start = 0; start < posts.size(); start += batch_size) {
    std::size_t end = std::min(posts.size(), start + batch_size);
    std::vector<std::string> texts;
    for (std::size_t i = start; i < end; ++i) {
      texts.push_back(posts[i].text);
      y_true.push_back(posts[i].hate_label);
    }
    auto pred = m.predict_hate(m.bb().tokenize(texts, max_len));
    y_pred.insert(y_pred.end(), pred.begin(), pred.end());
  }
  return metrics::macro_f1(y_true, y_pred);
}

// epoch-logging hook; receives each epoch record as it is produced
using EpochCallback = std::function<void(const EpochRecord&)>;

inline TrainResult train(const CorpusSplit& split, const TrainConfig& config,
                         EpochCallback on_epoch = nullptr) {
  config.validate();
  if (split.train.empty() || split.validation.empty() || split.test.empty())
    throw std::invalid_argument("train: split must have non-empty train/validation/test");

  auto bb = make_desk_backbone(split, config);
  const int max_len = effective_max_len(split, bb->vocab(), config.max_len);

  disentangler::DisentanglerConfig dcfg;
  dcfg.h_d = config.h_d;
  dcfg.h_causal = config.h_causal;
  dcfg.h_disc = config.h_disc;
  dcfg.tau = config.tau;
  auto m = std::make_shared<model::CatchModel>(bb, dcfg, config.seed);

  AdamW opt(m->params(), config.learning_rate, config.weight_decay);
  if (config.ablation == Ablation::no_finetune) {
    opt.freeze(bb->encoder_params());
    opt.freeze(bb->decoder_params());
  }

  rng::Stream eps(config.seed, "eps");
  rng::Stream gum(config.seed, "gumbel");
  rng::Stream drop(config.seed, "dropout");
  rng::Stream shuffle(config.seed, "shuffle");

  TrainResult result;
  result.model = m;
  result.used_max_len = max_len;
  result.report.config_echo = config.to_json();

  double best = -1.0;
  int best_epoch = 0, since_best = 0;
  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    if (config.anneal_tau) {
      // tau_k = max(0.1, tau_0 * exp(-r * k))
      m->disent().set_tau(
          std::max(0.1, config.tau * std::exp(-config.anneal_rate * (epoch - 1))));
    }
    auto batches = make_batches(split.train, *bb, max_len, config.batch_size, &shuffle);
    LossBreakdown sums;
    int batch_index = 0;
    for (auto& b : batches) {
      auto fr = m->forward(b.tokens, b.y, b.t, config.coeffs(), config.ablation, true, &eps,
                           &gum, &drop);
      if (!std::isfinite(fr.losses.combined))
        throw std::runtime_error("training fault: non-finite loss at epoch " +
                                 std::to_string(epoch) + ", batch " +
                                 std::to_string(batch_index));
      m->params().zero_grads();
      ad::backward(fr.combined);
      if (config.grad_clip > 0) opt.clip_grads(config.grad_clip);
      opt.step();
      sums.recon += fr.losses.recon;
      sums.kl_causal += fr.losses.kl_causal;
      sums.kl_target += fr.losses.kl_target;
      sums.ce_target += fr.losses.ce_target;
      sums.ce_hate += fr.losses.ce_hate;
      sums.vae_total += fr.losses.vae_total;
      sums.combined += fr.losses.combined;
      ++batch_index;
    }
    double n = static_cast<double>(batches.size());
    EpochRecord rec;
    rec.epoch = epoch;
    rec.mean_losses = {sums.recon / n,    sums.kl_causal / n, sums.kl_target / n,
                       sums.ce_target / n, sums.ce_hate / n,   sums.vae_total / n,
                       sums.combined / n};
    rec.val_macro_f1 = evaluate_macro_f1(*m, split.validation, max_len, config.batch_size);
    result.report.history.push_back(rec);
    if (on_epoch) on_epoch(rec);

    if (rec.val_macro_f1 > best) {
      best = rec.val_macro_f1;
      best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= config.patience) {
      break;
    }
  }
  result.report.best_val_macro_f1 = best;
  result.report.best_epoch = best_epoch;
  result.report.stopping_epoch = static_cast<int>(result.report.history.size());
  return result;
}

// Baseline trained with hate cross-entropy only, head on the raw embedding.
struct ZOnlyResult {
  std::shared_ptr<model::ZOnlyModel> model;
  int used_max_len = 0;
};

inline ZOnlyResult train_z_only(const CorpusSplit& split, const TrainConfig& config) {
  config.validate();
  auto bb = make_desk_backbone(split, config);
  const int max_len = effective_max_len(split, bb->vocab(), config.max_len);
  auto m = std::make_shared<model::ZOnlyModel>(bb, config.seed);
  AdamW opt(m->params(), config.learning_rate, config.weight_decay);
  rng::Stream drop(config.seed, "dropout");
  rng::Stream shuffle(config.seed, "shuffle");
  double best = -1.0;
  int since_best = 0;
  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    auto batches = make_batches(split.train, *bb, max_len, config.batch_size, &shuffle);
    for (auto& b : batches) {
      auto [loss, pred] = m->forward(b.tokens, b.y, true, &drop);
      if (!std::isfinite(loss->scalar()))
        throw std::runtime_error("training fault: non-finite baseline loss");
      m->params().zero_grads();
      ad::backward(loss);
      if (config.grad_clip > 0) opt.clip_grads(config.grad_clip);
      opt.step();
    }
    std::vector<int> y_true, y_pred;
    for (std::size_t start = 0; start < split.validation.size();
         start += config.batch_size) {
      std::size_t end = std::min(split.validation.size(), start + config.batch_size);
      std::vector<std::string> texts;
      for (std::size_t i = start; i < end; ++i) {
        texts.push_back(split.validation[i].text);
        y_true.push_back(split.validation[i].hate_label);
      }
      auto pred = m->predict_hate(bb->tokenize(texts, max_len));
      y_pred.insert(y_pred.end(), pred.begin(), pred.end());
    }
    double f1 = metrics::macro_f1(y_true, y_pred);
    if (f1 > best) {
      best = f1;
      since_best = 0;
    } else if (++since_best >= config.patience) {
      break;
    }
  }
  return {m, max_len};
}

}  // namespace catchd::trainer
