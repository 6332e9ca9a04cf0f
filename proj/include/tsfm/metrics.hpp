#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace tsfm::metrics {

using Labels = std::span<const std::uint32_t>;
using Scores = std::span<const double>;

// Mean recall over the classes present in y_true.
double balanced_accuracy(Labels y_true, Labels y_pred);
// (p_o − p_e) / (1 − p_e); 0 when p_e == 1.
double cohens_kappa(Labels y_true, Labels y_pred);
// Support-weighted per-class F1; empty precision/recall denominators count as 0.
double weighted_f1(Labels y_true, Labels y_pred);

// Binary ranking metrics; y_true entries must be 0 or 1 with both classes present.
// Mann-Whitney form: ties between a positive and a negative count one half.
double auroc(Labels y_true, Scores scores);
// Average precision: Σ (R_k − R_{k−1})·P_k over distinct descending thresholds.
double auc_pr(Labels y_true, Scores scores);

using BinaryMetric = std::function<double(Labels, Scores)>;
// Unweighted mean of one-vs-rest binary scores over classes present in
// y_true. scores is row-major [n × n_classes].
double multiclass_ovr(const BinaryMetric& metric, Labels y_true, Scores scores, std::size_t n_classes);

std::vector<std::uint32_t> argmax_rows(Scores scores, std::size_t n_classes);

// Names accepted by compute(): balanced_accuracy, cohens_kappa, weighted_f1,
// auroc, auc_pr. Ranking metrics use class-1 scores when n_classes == 2 and
// one-vs-rest otherwise.
const std::vector<std::string>& metric_names();
double compute(const std::string& name, Labels y_true, Scores scores, std::size_t n_classes);

}  // namespace tsfm::metrics
