#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

#include <Eigen/Dense>

namespace catchd::rng {

// FNV-1a, used to derive independent named streams from one root seed.
inline std::uint64_t hash_name(std::string_view name) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (char c : name) {
    h ^= static_cast<std::uint8_t>(c);
    h *= 0x100000001b3ull;
  }
  return h;
}

// All randomness flows from one root seed expanded into named streams,
// so paired runs (ablations, baselines) consume identical draws.
class Stream {
 public:
  Stream(std::uint64_t root_seed, std::string_view name)
      : engine_(root_seed ^ hash_name(name)) {}

  explicit Stream(std::uint64_t raw_seed) : engine_(raw_seed) {}

  std::mt19937_64& engine() { return engine_; }

  double uniform() { return unif_(engine_); }
  double normal() { return norm_(engine_); }

  // Gumbel(0,1) via two logs of a uniform draw.
  double gumbel() {
    double u = unif_(engine_);
    // keep u away from 0 and 1 so both logs stay finite
    u = std::min(std::max(u, 1e-12), 1.0 - 1e-12);
    return -std::log(-std::log(u));
  }

  Eigen::MatrixXd normal_matrix(Eigen::Index rows, Eigen::Index cols) {
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = normal();
    return m;
  }

  Eigen::MatrixXd gumbel_matrix(Eigen::Index rows, Eigen::Index cols) {
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = gumbel();
    return m;
  }

  std::uint64_t next_u64() { return engine_(); }

 private:
  std::mt19937_64 engine_;
  std::uniform_real_distribution<double> unif_{0.0, 1.0};
  std::normal_distribution<double> norm_{0.0, 1.0};
};

}  // namespace catchd::rng
