#pragma once

#include <stdexcept>
#include <vector>

namespace catchd::metrics {

// Unweighted mean of per-class F1 over both classes. A class absent from
// both truth and predictions contributes F1 = 0.
inline double macro_f1(const std::vector<int>& y_true, const std::vector<int>& y_pred) {
  if (y_true.size() != y_pred.size())
    throw std::invalid_argument("macro_f1: length mismatch");
  if (y_true.empty()) throw std::invalid_argument("macro_f1: empty input");
  double total = 0.0;
  for (int cls : {0, 1}) {
    long tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < y_true.size(); ++i) {
      bool t = y_true[i] == cls, p = y_pred[i] == cls;
      tp += t && p;
      fp += !t && p;
      fn += t && !p;
    }
    double f1 = (2 * tp + fp + fn) > 0
                    ? 2.0 * tp / static_cast<double>(2 * tp + fp + fn)
                    : 0.0;
    total += f1;
  }
  return total / 2.0;
}

}  // namespace catchd::metrics
