#include "tsfm/metrics.hpp"

#include <algorithm>
#include <numeric>

#include "tsfm/errors.hpp"

namespace tsfm::metrics {

namespace {

void check_pair(Labels y_true, std::size_t other, const char* what) {
  if (y_true.empty()) throw DataError(std::string(what) + ": no samples");
  if (y_true.size() != other) {
    throw DimensionError(std::string(what) + ": " + std::to_string(y_true.size()) + " labels vs " + std::to_string(other) +
                         " predictions");
  }
}

std::size_t class_count(Labels a, Labels b) {
  std::uint32_t m = 0;
  for (auto v : a) m = std::max(m, v);
  for (auto v : b) m = std::max(m, v);
  return static_cast<std::size_t>(m) + 1;
}

// confusion[t * k + p]
std::vector<double> confusion(Labels y_true, Labels y_pred, std::size_t k) {
  std::vector<double> cm(k * k, 0.0);
  for (std::size_t i = 0; i < y_true.size(); ++i) cm[y_true[i] * k + y_pred[i]] += 1.0;
  return cm;
}

void check_binary(Labels y_true, Scores scores, const char* what) {
  check_pair(y_true, scores.size(), what);
  std::size_t pos = 0;
  for (auto v : y_true) {
    if (v > 1) throw DataError(std::string(what) + ": labels must be 0 or 1");
    pos += v;
  }
  if (pos == 0 || pos == y_true.size()) throw DataError(std::string(what) + ": needs both positive and negative samples");
}

std::vector<std::size_t> order_descending(Scores scores) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return idx;
}

}  // namespace

double balanced_accuracy(Labels y_true, Labels y_pred) {
  check_pair(y_true, y_pred.size(), "balanced_accuracy");
  const std::size_t k = class_count(y_true, y_pred);
  const auto cm = confusion(y_true, y_pred, k);
  double total = 0.0;
  std::size_t present = 0;
  for (std::size_t c = 0; c < k; ++c) {
    double support = 0.0;
    for (std::size_t p = 0; p < k; ++p) support += cm[c * k + p];
    if (support == 0.0) continue;
    total += cm[c * k + c] / support;
    ++present;
  }
  return total / static_cast<double>(present);
}

double cohens_kappa(Labels y_true, Labels y_pred) {
  check_pair(y_true, y_pred.size(), "cohens_kappa");
  const std::size_t k = class_count(y_true, y_pred);
  const auto cm = confusion(y_true, y_pred, k);
  const double n = static_cast<double>(y_true.size());
  double po = 0.0, pe = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    double row = 0.0, col = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      row += cm[c * k + j];
      col += cm[j * k + c];
    }
    po += cm[c * k + c];
    pe += row * col;
  }
  po /= n;
  pe /= n * n;
  if (pe == 1.0) return 0.0;
  return (po - pe) / (1.0 - pe);
}

double weighted_f1(Labels y_true, Labels y_pred) {
  check_pair(y_true, y_pred.size(), "weighted_f1");
  const std::size_t k = class_count(y_true, y_pred);
  const auto cm = confusion(y_true, y_pred, k);
  double total = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    double support = 0.0, predicted = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      support += cm[c * k + j];
      predicted += cm[j * k + c];
    }
    const double tp = cm[c * k + c];
    // 2·tp / (2·tp + fp + fn); zero when the class is neither present nor predicted.
    const double denom = support + predicted;
    const double f1 = denom == 0.0 ? 0.0 : 2.0 * tp / denom;
    total += support * f1;
  }
  return total / static_cast<double>(y_true.size());
}

double auroc(Labels y_true, Scores scores) {
  check_binary(y_true, scores, "auroc");
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Sum of midranks of the positives (1-based), ties share their average rank.
  double rank_sum = 0.0;
  double n_pos = 0.0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t m = i; m < j; ++m)
      if (y_true[idx[m]] == 1) {
        rank_sum += midrank;
        n_pos += 1.0;
      }
    i = j;
  }
  const double n_neg = static_cast<double>(y_true.size()) - n_pos;
  return (rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg);
}

double auc_pr(Labels y_true, Scores scores) {
  check_binary(y_true, scores, "auc_pr");
  const auto idx = order_descending(scores);
  double n_pos = 0.0;
  for (auto v : y_true) n_pos += v;
  double tp = 0.0, seen = 0.0, prev_recall = 0.0, ap = 0.0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) {
      tp += y_true[idx[j]];
      seen += 1.0;
      ++j;
    }
    const double recall = tp / n_pos;
    ap += (recall - prev_recall) * (tp / seen);
    prev_recall = recall;
    i = j;
  }
  return ap;
}

double multiclass_ovr(const BinaryMetric& metric, Labels y_true, Scores scores, std::size_t n_classes) {
  if (n_classes == 0) throw ConfigError("multiclass_ovr: no classes");
  check_pair(y_true, scores.size() / n_classes, "multiclass_ovr");
  if (scores.size() != y_true.size() * n_classes) throw DimensionError("multiclass_ovr: score matrix shape mismatch");
  const std::size_t n = y_true.size();
  std::vector<std::uint32_t> binary(n);
  std::vector<double> column(n);
  double total = 0.0;
  std::size_t used = 0;
  for (std::size_t c = 0; c < n_classes; ++c) {
    std::size_t pos = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (y_true[i] >= n_classes) throw DataError("multiclass_ovr: label out of range");
      binary[i] = y_true[i] == c ? 1U : 0U;
      pos += binary[i];
      column[i] = scores[i * n_classes + c];
    }
    if (pos == 0) continue;
    // A class that is the only one present has no negatives; AUROC/AP are
    // then degenerate and the class is skipped like an absent one.
    if (pos == n) continue;
    total += metric(binary, column);
    ++used;
  }
  if (used == 0) throw DataError("multiclass_ovr: need at least two classes present");
  return total / static_cast<double>(used);
}

std::vector<std::uint32_t> argmax_rows(Scores scores, std::size_t n_classes) {
  if (n_classes == 0 || scores.size() % n_classes != 0) throw DimensionError("argmax_rows: bad score matrix");
  std::vector<std::uint32_t> out(scores.size() / n_classes);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto row = scores.subspan(i * n_classes, n_classes);
    out[i] = static_cast<std::uint32_t>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

const std::vector<std::string>& metric_names() {
  static const std::vector<std::string> names{"balanced_accuracy", "cohens_kappa", "weighted_f1", "auroc", "auc_pr"};
  return names;
}

double compute(const std::string& name, Labels y_true, Scores scores, std::size_t n_classes) {
  if (name == "auroc" || name == "auc_pr") {
    const BinaryMetric fn = name == "auroc" ? BinaryMetric(auroc) : BinaryMetric(auc_pr);
    if (n_classes == 2) {
      std::vector<double> positive(y_true.size());
      for (std::size_t i = 0; i < positive.size(); ++i) positive[i] = scores[i * 2 + 1];
      return fn(y_true, positive);
    }
    return multiclass_ovr(fn, y_true, scores, n_classes);
  }
  const auto pred = argmax_rows(scores, n_classes);
  if (name == "balanced_accuracy") return balanced_accuracy(y_true, pred);
  if (name == "cohens_kappa") return cohens_kappa(y_true, pred);
  if (name == "weighted_f1") return weighted_f1(y_true, pred);
  throw ConfigError("unknown metric '" + name + "'");
}

}  // namespace tsfm::metrics
