#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "catchd/core/autodiff.hpp"
#include "catchd/core/rng.hpp"

namespace catchd::core {

// Named trainable parameters. Registration order is the canonical order for
// checkpoints and optimizer state.
class ParamSet {
 public:
  ad::Var add(const std::string& name, ad::Mat init) {
    auto v = ad::make(std::move(init));
    items_.emplace_back(name, v);
    return v;
  }

  const std::vector<std::pair<std::string, ad::Var>>& items() const { return items_; }

  ad::Var find(const std::string& name) const {
    for (const auto& [n, v] : items_)
      if (n == name) return v;
    throw std::out_of_range("no parameter named " + name);
  }

  void zero_grads() {
    for (auto& [n, v] : items_) v->zero_grad();
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& [name, v] : items_) n += static_cast<std::size_t>(v->val.size());
    return n;
  }

  void append(const ParamSet& other) {
    for (const auto& it : other.items()) items_.push_back(it);
  }

 private:
  std::vector<std::pair<std::string, ad::Var>> items_;
};

inline ad::Mat glorot(rng::Stream& s, Eigen::Index rows, Eigen::Index cols) {
  double std = std::sqrt(2.0 / static_cast<double>(rows + cols));
  return s.normal_matrix(rows, cols) * std;
}

}  // namespace catchd::core
