#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "ccim/error.hpp"

namespace ccim::metrics {

struct MetricReport {
  std::map<int, double> per_class_ap;
  double map = 0.0;
  double c_f1 = 0.0;  // macro, label based
  double o_f1 = 0.0;  // micro, sample based
  std::array<double, 3> aae = {0, 0, 0};
  double mean_jc = 0.0;
  std::map<int, double> thresholds;
  std::string notes;  // regime tag
};

struct AuditReport {
  std::map<int, double> per_context_entropy;  // normalized, in [0, 1]
  double zero_entropy_fraction = 0.0;
  std::array<uint64_t, 5> histogram = {0, 0, 0, 0, 0};  // bins of width 0.2
};

// Rank-based AP: precision averaged at each positive, scores sorted
// descending, ties broken by stable input order.
double average_precision(const std::vector<double>& scores,
                         const std::vector<bool>& truth);

// Macro-averaged per-class F1; classes with no truth and no predictions
// contribute 0.
double f1_label_based(const std::vector<std::vector<bool>>& pred,
                      const std::vector<std::vector<bool>>& truth);

// Micro F1 pooling all (sample, class) decisions.
double f1_sample_based(const std::vector<std::vector<bool>>& pred,
                       const std::vector<std::vector<bool>>& truth);

// Mean absolute error per VAD dimension.
std::array<double, 3> aae(const std::vector<std::array<double, 3>>& pred,
                          const std::vector<std::array<double, 3>>& truth);

// Score threshold minimizing |precision - recall| (predict positive at
// score >= threshold); ties resolved toward the higher threshold.
double pr_equal_threshold(const std::vector<double>& scores,
                          const std::vector<bool>& truth);

double jaccard_coefficient(const std::set<int>& pred_set,
                           const std::set<int>& truth_set);

// Per-context normalized binary entropy (log base 2) of the positive/negative
// split, the share of zero-entropy contexts, and a 5-bin histogram over [0,1].
// top_k restricts the audit to the most frequent contexts.
AuditReport conditional_entropy_audit(const std::vector<int>& contexts,
                                      const std::vector<bool>& emotion_flags,
                                      std::optional<size_t> top_k = std::nullopt);

}  // namespace ccim::metrics
