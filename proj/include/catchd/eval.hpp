#pragma once

// Experimental protocol: the source -> target macro-F1 matrix, paired
// ablation comparisons, and the representation-invariance study (linear
// platform probe, pairwise MMD, PCA projection coordinates).

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "catchd/metrics.hpp"
#include "catchd/trainer.hpp"

namespace catchd::eval {

using corpus::CorpusSplit;
using corpus::Post;
using trainer::TrainConfig;

// ------------------------------------------------------------------ matrix

struct EvalMatrix {
  // (source tag, target tag) -> mean macro-F1 over seeds
  std::map<std::pair<std::string, std::string>, double> cells;
  std::map<std::pair<std::string, std::string>, int> instance_counts;
  std::vector<std::uint64_t> seeds;
  nlohmann::json config_echo;

  nlohmann::json to_json() const {
    nlohmann::json jcells = nlohmann::json::array();
    for (const auto& [key, f1] : cells) {
      jcells.push_back({{"source", key.first},
                        {"target", key.second},
                        {"macro_f1", f1},
                        {"instances", instance_counts.at(key)}});
    }
    return {{"cells", jcells}, {"seeds", seeds}, {"config", config_echo}};
  }
};

inline double eval_on_posts(model::CatchModel& m, const std::vector<Post>& posts,
                            int max_len, int batch_size) {
  return trainer::evaluate_macro_f1(m, posts, max_len, batch_size);
}

// Train once per (source, seed), select by source validation, then score on
// every target's held-out test set. The in-platform cell uses the source's
// own test split.
inline EvalMatrix cross_eval(const std::vector<CorpusSplit>& sources,
                             const std::vector<CorpusSplit>& targets,
                             const TrainConfig& config,
                             const std::vector<std::uint64_t>& seeds) {
  if (seeds.empty()) throw std::invalid_argument("cross_eval: need at least one seed");
  EvalMatrix out;
  out.seeds = seeds;
  out.config_echo = config.to_json();
  for (const auto& src : sources) {
    std::map<std::string, double> sums;
    for (auto seed : seeds) {
      TrainConfig c = config;
      c.seed = seed;
      trainer::TrainResult tr;
      try {
        tr = trainer::train(src, c);
      } catch (const std::exception& e) {
        throw std::runtime_error("training fault (source=" + src.platform_tag +
                                 ", seed=" + std::to_string(seed) + "): " + e.what());
      }
      for (const auto& tgt : targets)
        sums[tgt.platform_tag] +=
            eval_on_posts(*tr.model, tgt.test, tr.used_max_len, c.batch_size);
    }
    for (const auto& tgt : targets) {
      auto key = std::make_pair(src.platform_tag, tgt.platform_tag);
      out.cells[key] = sums[tgt.platform_tag] / static_cast<double>(seeds.size());
      out.instance_counts[key] = static_cast<int>(tgt.test.size());
    }
  }
  return out;
}

// one matrix row (fixed source) per variant, on identical seeds and data
inline std::map<std::string, EvalMatrix> ablation_compare(
    const CorpusSplit& split, const std::vector<CorpusSplit>& targets,
    const TrainConfig& config, const std::vector<std::uint64_t>& seeds) {
  if (seeds.empty()) throw std::invalid_argument("ablation_compare: seeds non-empty");
  std::map<std::string, EvalMatrix> out;
  for (model::Ablation a :
       {model::Ablation::full, model::Ablation::no_hate_and_target_loss,
        model::Ablation::no_finetune, model::Ablation::no_hate_loss,
        model::Ablation::no_target_loss}) {
    TrainConfig c = config;
    c.ablation = a;
    out[model::ablation_name(a)] = cross_eval({split}, targets, c, seeds);
  }
  return out;
}

// ------------------------------------------------------------------ probes

// Multinomial logistic probe with 5-fold cross-validation; plain gradient
// descent is plenty at these sizes.
inline double linear_probe_cv_accuracy(const Eigen::MatrixXd& x, const std::vector<int>& labels,
                                       int n_classes, std::uint64_t seed, int folds = 5,
                                       int iters = 300, double lr = 0.5) {
  const Eigen::Index n = x.rows();
  if (n < folds) throw std::invalid_argument("probe: too few samples");
  std::vector<Eigen::Index> order(n);
  for (Eigen::Index i = 0; i < n; ++i) order[i] = i;
  rng::Stream s(seed, "probe-folds");
  std::shuffle(order.begin(), order.end(), s.engine());

  // standardize features once
  Eigen::RowVectorXd mean = x.colwise().mean();
  Eigen::MatrixXd xc = x.rowwise() - mean;
  Eigen::RowVectorXd sd = (xc.array().square().colwise().mean()).sqrt() + 1e-8;
  xc = xc.array().rowwise() / sd.array();

  long correct = 0;
  for (int f = 0; f < folds; ++f) {
    std::vector<Eigen::Index> tr, te;
    for (Eigen::Index i = 0; i < n; ++i)
      ((i % folds) == f ? te : tr).push_back(order[static_cast<std::size_t>(i)]);
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(x.cols(), n_classes);
    Eigen::RowVectorXd b = Eigen::RowVectorXd::Zero(n_classes);
    Eigen::MatrixXd xtr(tr.size(), x.cols());
    for (std::size_t i = 0; i < tr.size(); ++i) xtr.row(static_cast<Eigen::Index>(i)) = xc.row(tr[i]);
    for (int it = 0; it < iters; ++it) {
      Eigen::MatrixXd logits = (xtr * w).rowwise() + b;
      Eigen::MatrixXd probs(logits.rows(), logits.cols());
      for (Eigen::Index r = 0; r < logits.rows(); ++r) {
        Eigen::ArrayXd row = logits.row(r).array();
        row -= row.maxCoeff();
        Eigen::ArrayXd e = row.exp();
        probs.row(r) = (e / e.sum()).transpose();
      }
      for (std::size_t i = 0; i < tr.size(); ++i)
        probs(static_cast<Eigen::Index>(i), labels[static_cast<std::size_t>(tr[i])]) -= 1.0;
      probs /= static_cast<double>(tr.size());
      w -= lr * (xtr.transpose() * probs);
      b -= lr * probs.colwise().sum();
    }
    for (auto i : te) {
      Eigen::RowVectorXd logits = xc.row(i) * w + b;
      Eigen::Index arg = 0;
      logits.maxCoeff(&arg);
      correct += (static_cast<int>(arg) == labels[static_cast<std::size_t>(i)]);
    }
  }
  return static_cast<double>(correct) / static_cast<double>(n);
}

// biased Gaussian-kernel MMD^2 estimate; bandwidth = median pairwise distance
inline double gaussian_mmd(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  auto sqdist = [](const Eigen::MatrixXd& p, const Eigen::MatrixXd& q) {
    Eigen::MatrixXd d(p.rows(), q.rows());
    for (Eigen::Index i = 0; i < p.rows(); ++i)
      for (Eigen::Index j = 0; j < q.rows(); ++j)
        d(i, j) = (p.row(i) - q.row(j)).squaredNorm();
    return d;
  };
  Eigen::MatrixXd daa = sqdist(a, a), dbb = sqdist(b, b), dab = sqdist(a, b);
  std::vector<double> all;
  all.reserve(static_cast<std::size_t>(daa.size() + dbb.size() + dab.size()));
  for (auto* d : {&daa, &dbb, &dab})
    for (Eigen::Index i = 0; i < d->size(); ++i) all.push_back(std::sqrt((*d)(i)));
  std::nth_element(all.begin(), all.begin() + all.size() / 2, all.end());
  double median = all[all.size() / 2];
  double gamma = 1.0 / (2.0 * std::max(median * median, 1e-12));
  double kaa = (-gamma * daa.array()).exp().mean();
  double kbb = (-gamma * dbb.array()).exp().mean();
  double kab = (-gamma * dab.array()).exp().mean();
  return std::max(0.0, kaa + kbb - 2.0 * kab);
}

// deterministic PCA to two dimensions
inline Eigen::MatrixXd pca_2d(const Eigen::MatrixXd& x) {
  Eigen::RowVectorXd mean = x.colwise().mean();
  Eigen::MatrixXd xc = x.rowwise() - mean;
  Eigen::MatrixXd cov = (xc.transpose() * xc) / std::max<double>(1.0, x.rows() - 1.0);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  Eigen::MatrixXd basis = es.eigenvectors().rightCols(2).rowwise().reverse();
  // fix sign: make the largest-magnitude entry of each axis positive
  for (int c = 0; c < 2; ++c) {
    Eigen::Index idx = 0;
    basis.col(c).cwiseAbs().maxCoeff(&idx);
    if (basis(idx, c) < 0) basis.col(c) = -basis.col(c);
  }
  return xc * basis;
}

// ------------------------------------------------------------------ report

struct ProjectionRow {
  int instance_id;
  std::string platform;
  int hate_label;
  double dim1, dim2;
};

struct InvarianceReport {
  std::map<std::string, int> sampled_per_platform;
  double probe_accuracy_xc = 0.0;
  double probe_accuracy_z = 0.0;
  double chance = 0.0;
  std::map<std::string, double> mmd_xc;  // "tagA|tagB" -> MMD on the causal latent
  std::map<std::string, double> mmd_z;
  std::vector<ProjectionRow> projection;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["sampled_per_platform"] = sampled_per_platform;
    j["probe_accuracy_xc"] = probe_accuracy_xc;
    j["probe_accuracy_z"] = probe_accuracy_z;
    j["chance"] = chance;
    j["mmd_xc"] = mmd_xc;
    j["mmd_z"] = mmd_z;
    return j;
  }
};

// Mean (noise-free) causal latents per sampled instance; linear platform
// probe and pairwise MMD on both the causal latent and the raw embedding.
inline InvarianceReport invariance_analysis(model::CatchModel& m,
                                            const std::vector<CorpusSplit>& platforms,
                                            int max_len, int sample_n, std::uint64_t seed,
                                            int batch_size = 64) {
  if (platforms.size() < 2)
    throw std::invalid_argument("invariance_analysis: need at least two platforms");
  InvarianceReport rep;
  std::vector<Eigen::MatrixXd> xc_by_platform, z_by_platform;
  std::vector<int> platform_labels;
  std::vector<Post> sampled_posts;
  std::vector<int> sampled_platform_of;

  for (std::size_t p = 0; p < platforms.size(); ++p) {
    std::vector<Post> pool = platforms[p].train;
    pool.insert(pool.end(), platforms[p].validation.begin(), platforms[p].validation.end());
    pool.insert(pool.end(), platforms[p].test.begin(), platforms[p].test.end());
    rng::Stream s(seed, "invariance-sample-" + std::to_string(p));
    std::shuffle(pool.begin(), pool.end(), s.engine());
    if (static_cast<int>(pool.size()) > sample_n) pool.resize(sample_n);
    rep.sampled_per_platform[platforms[p].platform_tag] = static_cast<int>(pool.size());

    Eigen::MatrixXd xc, z;
    for (std::size_t start = 0; start < pool.size(); start += batch_size) {
      std::size_t end = std::min(pool.size(), start + batch_size);
      std::vector<std::string> texts;
      for (std::size_t i = start; i < end; ++i) texts.push_back(pool[i].text);
      auto [xc_b, z_b] = m.latents_for_analysis(m.bb().tokenize(texts, max_len));
      auto append = [](Eigen::MatrixXd& acc, const Eigen::MatrixXd& block) {
        Eigen::Index old = acc.rows();
        acc.conservativeResize(old + block.rows(), block.cols());
        acc.middleRows(old, block.rows()) = block;
      };
      append(xc, xc_b);
      append(z, z_b);
    }
    for (std::size_t i = 0; i < pool.size(); ++i) {
      platform_labels.push_back(static_cast<int>(p));
      sampled_posts.push_back(pool[i]);
      sampled_platform_of.push_back(static_cast<int>(p));
    }
    xc_by_platform.push_back(std::move(xc));
    z_by_platform.push_back(std::move(z));
  }

  auto stack = [](const std::vector<Eigen::MatrixXd>& parts) {
    Eigen::Index rows = 0;
    for (const auto& p : parts) rows += p.rows();
    Eigen::MatrixXd out(rows, parts[0].cols());
    Eigen::Index r = 0;
    for (const auto& p : parts) {
      out.middleRows(r, p.rows()) = p;
      r += p.rows();
    }
    return out;
  };
  Eigen::MatrixXd all_xc = stack(xc_by_platform), all_z = stack(z_by_platform);
  int n_classes = static_cast<int>(platforms.size());
  rep.chance = 1.0 / n_classes;
  rep.probe_accuracy_xc =
      linear_probe_cv_accuracy(all_xc, platform_labels, n_classes, seed);
  rep.probe_accuracy_z = linear_probe_cv_accuracy(all_z, platform_labels, n_classes, seed);

  for (std::size_t a = 0; a < platforms.size(); ++a)
    for (std::size_t b = a + 1; b < platforms.size(); ++b) {
      std::string key = platforms[a].platform_tag + "|" + platforms[b].platform_tag;
      rep.mmd_xc[key] = gaussian_mmd(xc_by_platform[a], xc_by_platform[b]);
      rep.mmd_z[key] = gaussian_mmd(z_by_platform[a], z_by_platform[b]);
    }

  Eigen::MatrixXd proj = pca_2d(all_xc);
  for (Eigen::Index i = 0; i < proj.rows(); ++i) {
    const auto& post = sampled_posts[static_cast<std::size_t>(i)];
    rep.projection.push_back({static_cast<int>(i), post.platform_tag, post.hate_label,
                              proj(i, 0), proj(i, 1)});
  }
  return rep;
}

inline void write_projection_csv(const InvarianceReport& rep, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write: " + path);
  out << "instance_id,platform,hate_label,dim1,dim2\n";
  out.precision(17);
  for (const auto& r : rep.projection)
    out << r.instance_id << "," << r.platform << "," << r.hate_label << "," << r.dim1 << ","
        << r.dim2 << "\n";
}

}  // namespace catchd::eval
