#pragma once

// Dataset ingestion: JSONL records -> (text, hate label, target label,
// platform) triples, stratified splitting, and summary statistics.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "catchd/core/rng.hpp"

namespace catchd::corpus {

enum class Platform { GAB, Reddit, Twitter, YouTube, Synthetic };

inline std::string platform_name(Platform p) {
  switch (p) {
    case Platform::GAB: return "GAB";
    case Platform::Reddit: return "Reddit";
    case Platform::Twitter: return "Twitter";
    case Platform::YouTube: return "YouTube";
    case Platform::Synthetic: return "Synthetic";
  }
  return "?";
}

inline Platform platform_from_name(const std::string& s) {
  if (s == "GAB" || s == "gab") return Platform::GAB;
  if (s == "Reddit" || s == "reddit") return Platform::Reddit;
  if (s == "Twitter" || s == "twitter") return Platform::Twitter;
  if (s == "YouTube" || s == "youtube") return Platform::YouTube;
  if (s.rfind("synth", 0) == 0 || s == "Synthetic") return Platform::Synthetic;
  throw std::invalid_argument("unknown platform: " + s);
}

struct Post {
  std::string text;
  int hate_label = 0;  // 0 non-hateful, 1 hateful
  int target_label = 0;
  Platform platform = Platform::Synthetic;
  std::string platform_tag;  // distinguishes synth-0..synth-N
  std::optional<double> raw_score;
};

// severity score -> binary label; 0.5 itself counts as hateful
inline int binarize_score(double score) { return score >= 0.5 ? 1 : 0; }

struct TargetTaxonomy {
  std::vector<std::string> class_names;
  std::map<std::string, int> source_mapping;

  static TargetTaxonomy default_eight() {
    TargetTaxonomy t;
    t.class_names = {"Race",        "Religion",    "Gender", "Sexual Preference",
                     "Nationality", "Immigration", "Disability", "Class"};
    for (std::size_t i = 0; i < t.class_names.size(); ++i)
      t.source_mapping[t.class_names[i]] = static_cast<int>(i);
    return t;
  }

  int k() const { return static_cast<int>(class_names.size()); }

  int map_label(const std::string& raw, int line_no) const {
    auto it = source_mapping.find(raw);
    if (it == source_mapping.end())
      throw std::runtime_error("taxonomy error: unmapped target label '" + raw +
                               "' at line " + std::to_string(line_no));
    return it->second;
  }

  static TargetTaxonomy from_json(const nlohmann::json& j) {
    TargetTaxonomy t;
    t.class_names = j.at("class_names").get<std::vector<std::string>>();
    if (j.contains("source_mapping")) {
      for (auto& [raw, v] : j.at("source_mapping").items()) {
        if (v.is_string()) {
          auto it = std::find(t.class_names.begin(), t.class_names.end(),
                              v.get<std::string>());
          if (it == t.class_names.end())
            throw std::runtime_error("taxonomy error: mapping for '" + raw +
                                     "' names unknown class " + v.get<std::string>());
          t.source_mapping[raw] = static_cast<int>(it - t.class_names.begin());
        } else {
          t.source_mapping[raw] = v.get<int>();
        }
      }
    } else {
      for (std::size_t i = 0; i < t.class_names.size(); ++i)
        t.source_mapping[t.class_names[i]] = static_cast<int>(i);
    }
    return t;
  }

  static TargetTaxonomy load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open taxonomy file: " + path);
    nlohmann::json j;
    in >> j;
    return from_json(j);
  }
};

inline std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

// One record per line:
// {"text":..., "hate_label":0|1 (optional if "score"), "score":real,
//  "target_label":"Race"|index, "platform":"GAB"}
inline Post parse_record(const std::string& line, Platform platform,
                         const TargetTaxonomy& taxonomy, int line_no) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("load error at line " + std::to_string(line_no) +
                             ": malformed JSON (" + e.what() + ")");
  }
  Post p;
  try {
    p.text = trim(j.at("text").get<std::string>());
    if (p.text.empty())
      throw std::runtime_error("empty text");
    if (j.contains("score")) {
      p.raw_score = j.at("score").get<double>();
      p.hate_label = binarize_score(*p.raw_score);
      if (j.contains("hate_label") &&
          j.at("hate_label").get<int>() != p.hate_label)
        throw std::runtime_error("hate_label inconsistent with score");
    } else {
      p.hate_label = j.at("hate_label").get<int>();
      if (p.hate_label != 0 && p.hate_label != 1)
        throw std::runtime_error("hate_label must be 0 or 1");
    }
    const auto& t = j.at("target_label");
    if (t.is_string()) {
      p.target_label = taxonomy.map_label(t.get<std::string>(), line_no);
    } else {
      p.target_label = t.get<int>();
      if (p.target_label < 0 || p.target_label >= taxonomy.k())
        throw std::runtime_error("target_label out of range");
    }
    p.platform = platform;
    p.platform_tag = j.contains("platform") ? j.at("platform").get<std::string>()
                                            : platform_name(platform);
  } catch (const std::runtime_error&) {
    throw;
  } catch (const std::exception& e) {
    throw std::runtime_error("load error at line " + std::to_string(line_no) +
                             ": " + e.what());
  }
  return p;
}

inline std::vector<Post> load_dataset(const std::string& path, Platform platform,
                                      const TargetTaxonomy& taxonomy) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset file: " + path);
  std::vector<Post> posts;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    posts.push_back(parse_record(line, platform, taxonomy, line_no));
  }
  return posts;
}

inline nlohmann::json post_to_json(const Post& p) {
  nlohmann::json j;
  j["text"] = p.text;
  j["hate_label"] = p.hate_label;
  j["target_label"] = p.target_label;
  j["platform"] = p.platform_tag;
  if (p.raw_score) j["score"] = *p.raw_score;
  return j;
}

inline void write_jsonl(const std::vector<Post>& posts, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write: " + path);
  for (const auto& p : posts) out << post_to_json(p).dump() << "\n";
}

struct CorpusSplit {
  std::vector<Post> train, validation, test;
  Platform platform = Platform::Synthetic;
  std::string platform_tag;
  std::map<int, int> class_counts;  // hate_label -> count over all splits

  std::size_t size() const { return train.size() + validation.size() + test.size(); }
};

struct SplitFractions {
  double train = 0.8, validation = 0.1, test = 0.1;
};

// Stratified on hate_label, deterministic under seed; the union of the three
// parts is exactly the input.
inline CorpusSplit split_corpus(const std::vector<Post>& posts, SplitFractions f,
                                std::uint64_t seed) {
  if (f.train <= 0 || f.validation <= 0 || f.test <= 0)
    throw std::invalid_argument("split fractions must be positive");
  if (std::abs(f.train + f.validation + f.test - 1.0) > 1e-9)
    throw std::invalid_argument("split fractions must sum to 1");
  if (posts.empty()) throw std::invalid_argument("split_corpus: empty corpus");

  CorpusSplit out;
  out.platform = posts.front().platform;
  out.platform_tag = posts.front().platform_tag;

  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < posts.size(); ++i)
    by_class[posts[i].hate_label].push_back(i);

  rng::Stream stream(seed, "split");
  for (auto& [label, idx] : by_class) {
    out.class_counts[label] = static_cast<int>(idx.size());
    std::shuffle(idx.begin(), idx.end(), stream.engine());
    const std::size_t n = idx.size();
    auto n_train = static_cast<std::size_t>(std::floor(f.train * n + 0.5));
    auto n_val = static_cast<std::size_t>(std::floor(f.validation * n + 0.5));
    if (n_train + n_val > n) n_val = n - n_train;
    std::size_t n_test = n - n_train - n_val;
    if (n_train == 0 || n_val == 0 || n_test == 0)
      throw std::runtime_error("stratification error: class " + std::to_string(label) +
                               " too small for three splits");
    for (std::size_t i = 0; i < n_train; ++i) out.train.push_back(posts[idx[i]]);
    for (std::size_t i = n_train; i < n_train + n_val; ++i)
      out.validation.push_back(posts[idx[i]]);
    for (std::size_t i = n_train + n_val; i < n; ++i) out.test.push_back(posts[idx[i]]);
  }
  return out;
}

struct CorpusStats {
  int count = 0;
  int hateful = 0;
  double hateful_percent = 0.0;  // rounded to one decimal
  std::map<int, int> per_target;
};

inline CorpusStats corpus_stats(const std::vector<Post>& posts) {
  if (posts.empty()) throw std::invalid_argument("corpus_stats: empty corpus");
  CorpusStats s;
  s.count = static_cast<int>(posts.size());
  for (const auto& p : posts) {
    s.hateful += p.hate_label;
    s.per_target[p.target_label]++;
  }
  s.hateful_percent = std::round(1000.0 * s.hateful / s.count) / 10.0;
  return s;
}

inline nlohmann::json stats_to_json(const CorpusStats& s) {
  nlohmann::json j;
  j["count"] = s.count;
  j["hateful"] = s.hateful;
  j["hateful_percent"] = s.hateful_percent;
  nlohmann::json per;
  for (auto& [t, c] : s.per_target) per[std::to_string(t)] = c;
  j["per_target"] = per;
  return j;
}

}  // namespace catchd::corpus
