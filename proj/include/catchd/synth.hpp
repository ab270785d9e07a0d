#pragma once

// Synthetic corpora with known generative factors. Every platform shares the
// same causal-token rule for the hate label; what differs per platform is the
// target-class mixture, optionally skewed by the hate label so that target
// tokens form a platform-specific shortcut a non-disentangled classifier can
// latch onto.

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "catchd/backbone.hpp"
#include "catchd/corpus.hpp"
#include "catchd/core/rng.hpp"
#include "catchd/metrics.hpp"

namespace catchd::synth {

using corpus::CorpusSplit;
using corpus::Post;

struct SynthSpec {
  int n_platforms = 4;
  int n_per_platform = 2000;
  int n_target_classes = 8;
  int n_hate_tokens = 6;      // causal tokens that make a post hateful
  int n_benign_tokens = 6;    // causal tokens that do not
  int tokens_per_target = 4;  // per target class
  int n_filler_tokens = 40;
  int min_len = 8, max_len = 24;
  double label_noise = 0.05;
  // Per-platform, per-label target mixtures, [platform][hate_label][class].
  // Empty = uniform mixtures (no platform shift, no shortcut).
  std::vector<std::vector<std::vector<double>>> target_mixtures;
  double hate_rate = 0.5;
  // Platform-specific writing style: with skew s, a filler token comes from
  // the platform's own block of the filler inventory with probability s and
  // from anywhere with probability 1-s. Label-independent by construction.
  double filler_skew = 0.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (n_platforms < 1 || n_per_platform < 1) throw std::invalid_argument("degenerate spec");
    if (n_hate_tokens < 1 || n_benign_tokens < 1 || n_filler_tokens < 1 ||
        tokens_per_target < 1 || n_target_classes < 2)
      throw std::invalid_argument("degenerate spec: empty token partition");
    if (label_noise < 0 || label_noise >= 0.5)
      throw std::invalid_argument("label_noise must be in [0, 0.5)");
    if (filler_skew < 0 || filler_skew > 1)
      throw std::invalid_argument("filler_skew must be in [0, 1]");
    if (filler_skew > 0 && n_filler_tokens < n_platforms)
      throw std::invalid_argument("filler_skew needs at least one filler per platform");
    if (min_len < 4 || max_len < min_len) throw std::invalid_argument("bad length range");
    if (!target_mixtures.empty()) {
      if (static_cast<int>(target_mixtures.size()) != n_platforms)
        throw std::invalid_argument("target_mixtures must cover every platform");
      for (const auto& per_label : target_mixtures) {
        if (per_label.size() != 2) throw std::invalid_argument("need mixtures for both labels");
        for (const auto& mix : per_label) {
          if (static_cast<int>(mix.size()) != n_target_classes)
            throw std::invalid_argument("mixture size != target class count");
          double s = 0;
          for (double w : mix) {
            if (w < 0) throw std::invalid_argument("negative mixture weight");
            s += w;
          }
          if (std::abs(s - 1.0) > 1e-9)
            throw std::invalid_argument("mixture weights must sum to 1");
        }
      }
    }
  }

  // token inventory, disjoint by construction
  std::string hate_token(int i) const { return "hate" + std::to_string(i); }
  std::string benign_token(int i) const { return "ben" + std::to_string(i); }
  std::string target_token(int cls, int i) const {
    return "tgt" + std::to_string(cls) + "x" + std::to_string(i);
  }
  std::string filler_token(int i) const { return "fill" + std::to_string(i); }

  // Default shifted mixtures: each platform concentrates on a rotated block
  // of target classes, identically for both labels (platform shift, no
  // label shortcut).
  static std::vector<std::vector<std::vector<double>>> rotated_mixtures(int n_platforms,
                                                                        int k) {
    std::vector<std::vector<std::vector<double>>> out;
    for (int p = 0; p < n_platforms; ++p) {
      std::vector<double> mix(k, 0.2 / std::max(1, k - 2));
      mix[(2 * p) % k] = 0.4;
      mix[(2 * p + 1) % k] = 0.4;
      double s = 0;
      for (double w : mix) s += w;
      for (double& w : mix) w /= s;
      out.push_back({mix, mix});
    }
    return out;
  }

  // Mixtures with a label-conditioned skew: on platform 0 hateful posts lean
  // to the low target classes and non-hateful to the high ones; every other
  // platform reverses the skew. strength in [0, 1]; 0 = no shortcut.
  static std::vector<std::vector<std::vector<double>>> spurious_mixtures(int n_platforms,
                                                                         int k,
                                                                         double strength) {
    auto block = [k](bool low, double strength) {
      std::vector<double> mix(k, 0.0);
      int half = k / 2;
      double major = (1.0 + strength) / 2.0, minor = 1.0 - major;
      for (int c = 0; c < k; ++c) {
        bool in_low = c < half;
        double share = (in_low == low) ? major : minor;
        mix[c] = share / half;
      }
      return mix;
    };
    std::vector<std::vector<std::vector<double>>> out;
    for (int p = 0; p < n_platforms; ++p) {
      bool source_side = (p == 0);
      // label 0 mixture, then label 1 mixture
      out.push_back({block(!source_side, strength), block(source_side, strength)});
    }
    return out;
  }

  nlohmann::json to_json() const {
    return {{"n_platforms", n_platforms},
            {"n_per_platform", n_per_platform},
            {"n_target_classes", n_target_classes},
            {"n_hate_tokens", n_hate_tokens},
            {"n_benign_tokens", n_benign_tokens},
            {"tokens_per_target", tokens_per_target},
            {"n_filler_tokens", n_filler_tokens},
            {"min_len", min_len},
            {"max_len", max_len},
            {"label_noise", label_noise},
            {"hate_rate", hate_rate},
            {"filler_skew", filler_skew},
            {"target_mixtures", target_mixtures},
            {"seed", seed}};
  }

  static SynthSpec from_json(const nlohmann::json& j) {
    SynthSpec s;
    auto get = [&](const char* k, auto& field) {
      if (j.contains(k)) field = j.at(k).template get<std::decay_t<decltype(field)>>();
    };
    get("n_platforms", s.n_platforms);
    get("n_per_platform", s.n_per_platform);
    get("n_target_classes", s.n_target_classes);
    get("n_hate_tokens", s.n_hate_tokens);
    get("n_benign_tokens", s.n_benign_tokens);
    get("tokens_per_target", s.tokens_per_target);
    get("n_filler_tokens", s.n_filler_tokens);
    get("min_len", s.min_len);
    get("max_len", s.max_len);
    get("label_noise", s.label_noise);
    get("hate_rate", s.hate_rate);
    get("filler_skew", s.filler_skew);
    get("target_mixtures", s.target_mixtures);
    get("seed", s.seed);
    if (j.contains("mixture_preset")) {
      std::string preset = j.at("mixture_preset").get<std::string>();
      double strength = j.value("spurious_strength", 0.8);
      if (preset == "rotated")
        s.target_mixtures = rotated_mixtures(s.n_platforms, s.n_target_classes);
      else if (preset == "spurious")
        s.target_mixtures = spurious_mixtures(s.n_platforms, s.n_target_classes, strength);
      else if (preset != "uniform")
        throw std::invalid_argument("unknown mixture_preset: " + preset);
    }
    return s;
  }
};

namespace detail {
inline int sample_categorical(const std::vector<double>& weights, rng::Stream& s) {
  double u = s.uniform(), acc = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    acc += weights[i];
    if (u < acc) return static_cast<int>(i);
  }
  return static_cast<int>(weights.size()) - 1;
}
}  // namespace detail

// The generative rule: a post is hateful iff it contains at least one hate
// token; the observed label flips with probability label_noise.
inline int causal_rule(const std::string& text) {
  for (const auto& w : backbone::Vocab::split_ws(text))
    if (w.rfind("hate", 0) == 0) return 1;
  return 0;
}

inline std::vector<std::vector<Post>> generate_posts(const SynthSpec& spec) {
  spec.validate();
  auto mixtures = spec.target_mixtures;
  if (mixtures.empty()) {
    std::vector<double> uniform(spec.n_target_classes, 1.0 / spec.n_target_classes);
    mixtures.assign(spec.n_platforms, {uniform, uniform});
  }
  std::vector<std::vector<Post>> platforms;
  for (int p = 0; p < spec.n_platforms; ++p) {
    rng::Stream s(spec.seed, "synth-platform-" + std::to_string(p));
    std::vector<Post> posts;
    for (int i = 0; i < spec.n_per_platform; ++i) {
      bool hateful = s.uniform() < spec.hate_rate;
      int true_label = hateful ? 1 : 0;
      int target = detail::sample_categorical(mixtures[p][true_label], s);

      std::vector<std::string> toks;
      int n_causal = 1 + static_cast<int>(s.uniform() * 3);  // 1-3 causal tokens
      for (int c = 0; c < n_causal; ++c) {
        if (hateful && c == 0)
          toks.push_back(spec.hate_token(static_cast<int>(s.uniform() * spec.n_hate_tokens)));
        else
          toks.push_back(
              spec.benign_token(static_cast<int>(s.uniform() * spec.n_benign_tokens)));
      }
      int n_target = 1 + static_cast<int>(s.uniform() * 2);  // 1-2 target tokens
      for (int c = 0; c < n_target; ++c)
        toks.push_back(
            spec.target_token(target, static_cast<int>(s.uniform() * spec.tokens_per_target)));
      int len = spec.min_len + static_cast<int>(s.uniform() * (spec.max_len - spec.min_len + 1));
      int block = spec.n_filler_tokens / spec.n_platforms;
      while (static_cast<int>(toks.size()) < len) {
        int f;
        if (spec.filler_skew > 0 && s.uniform() < spec.filler_skew)
          f = p * block + static_cast<int>(s.uniform() * block);
        else
          f = static_cast<int>(s.uniform() * spec.n_filler_tokens);
        toks.push_back(spec.filler_token(f));
      }
      std::shuffle(toks.begin(), toks.end(), s.engine());

      Post post;
      for (std::size_t k = 0; k < toks.size(); ++k) {
        if (k) post.text += " ";
        post.text += toks[k];
      }
      int observed = true_label;
      if (s.uniform() < spec.label_noise) observed = 1 - observed;
      post.hate_label = observed;
      post.target_label = target;
      post.platform = corpus::Platform::Synthetic;
      post.platform_tag = "synth-" + std::to_string(p);
      posts.push_back(std::move(post));
    }
    platforms.push_back(std::move(posts));
  }
  return platforms;
}

inline std::vector<CorpusSplit> generate(const SynthSpec& spec,
                                         corpus::SplitFractions fractions = {}) {
  std::vector<CorpusSplit> splits;
  auto platforms = generate_posts(spec);
  for (std::size_t p = 0; p < platforms.size(); ++p) {
    auto split = corpus::split_corpus(platforms[p], fractions,
                                      spec.seed + static_cast<std::uint64_t>(p));
    splits.push_back(std::move(split));
  }
  return splits;
}

// macro-F1 of the generative rule itself against the observed labels;
// upper-bounds any model trained on these posts
inline double oracle_f1(const std::vector<Post>& posts) {
  std::vector<int> y_true, y_pred;
  for (const auto& p : posts) {
    y_true.push_back(p.hate_label);
    y_pred.push_back(causal_rule(p.text));
  }
  return metrics::macro_f1(y_true, y_pred);
}

}  // namespace catchd::synth
