#include "ccim/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace ccim::metrics {

double average_precision(const std::vector<double>& scores,
                         const std::vector<bool>& truth) {
  if (scores.size() != truth.size()) throw shape_error("scores/truth lengths differ");
  size_t positives = std::count(truth.begin(), truth.end(), true);
  if (positives == 0) throw metric_error("average precision undefined without positives");

  std::vector<size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return scores[a] > scores[b]; });

  double ap = 0.0;
  size_t hits = 0;
  for (size_t rank = 0; rank < order.size(); ++rank) {
    if (!truth[order[rank]]) continue;
    ++hits;
    ap += static_cast<double>(hits) / static_cast<double>(rank + 1);
  }
  return ap / static_cast<double>(positives);
}

namespace {

void check_shapes(const std::vector<std::vector<bool>>& pred,
                  const std::vector<std::vector<bool>>& truth) {
  if (pred.size() != truth.size()) throw shape_error("pred/truth sample counts differ");
  for (size_t i = 0; i < pred.size(); ++i)
    if (pred[i].size() != truth[i].size() ||
        (i > 0 && pred[i].size() != pred[0].size()))
      throw shape_error("pred/truth class widths differ");
}

double f1_from_counts(uint64_t tp, uint64_t fp, uint64_t fn) {
  if (tp == 0) return 0.0;
  double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
  double recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
  return 2.0 * precision * recall / (precision + recall);
}

}  // namespace

double f1_label_based(const std::vector<std::vector<bool>>& pred,
                      const std::vector<std::vector<bool>>& truth) {
  check_shapes(pred, truth);
  if (pred.empty()) throw metric_error("F1 undefined on empty input");
  const size_t classes = pred[0].size();
  double total = 0.0;
  for (size_t c = 0; c < classes; ++c) {
    uint64_t tp = 0, fp = 0, fn = 0;
    for (size_t i = 0; i < pred.size(); ++i) {
      if (pred[i][c] && truth[i][c]) ++tp;
      else if (pred[i][c]) ++fp;
      else if (truth[i][c]) ++fn;
    }
    total += f1_from_counts(tp, fp, fn);
  }
  return total / static_cast<double>(classes);
}

double f1_sample_based(const std::vector<std::vector<bool>>& pred,
                       const std::vector<std::vector<bool>>& truth) {
  check_shapes(pred, truth);
  if (pred.empty()) throw metric_error("F1 undefined on empty input");
  uint64_t tp = 0, fp = 0, fn = 0;
  for (size_t i = 0; i < pred.size(); ++i)
    for (size_t c = 0; c < pred[i].size(); ++c) {
      if (pred[i][c] && truth[i][c]) ++tp;
      else if (pred[i][c]) ++fp;
      else if (truth[i][c]) ++fn;
    }
  return f1_from_counts(tp, fp, fn);
}

std::array<double, 3> aae(const std::vector<std::array<double, 3>>& pred,
                          const std::vector<std::array<double, 3>>& truth) {
  if (pred.size() != truth.size() || pred.empty())
    throw shape_error("aae needs equal, nonzero lengths");
  std::array<double, 3> out = {0, 0, 0};
  for (size_t i = 0; i < pred.size(); ++i)
    for (int d = 0; d < 3; ++d) out[d] += std::abs(pred[i][d] - truth[i][d]);
  for (int d = 0; d < 3; ++d) out[d] /= static_cast<double>(pred.size());
  return out;
}

double pr_equal_threshold(const std::vector<double>& scores,
                          const std::vector<bool>& truth) {
  if (scores.size() != truth.size()) throw shape_error("scores/truth lengths differ");
  size_t positives = std::count(truth.begin(), truth.end(), true);
  if (positives == 0 || positives == truth.size())
    throw metric_error("PR-equal threshold needs at least one positive and one negative");

  std::vector<double> candidates(scores);
  std::sort(candidates.begin(), candidates.end(), std::greater<>());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

  double best_t = candidates.front();
  double best_gap = std::numeric_limits<double>::infinity();
  for (double t : candidates) {  // descending, so earlier = higher threshold
    uint64_t tp = 0, predicted = 0;
    for (size_t i = 0; i < scores.size(); ++i) {
      if (scores[i] >= t) {
        ++predicted;
        if (truth[i]) ++tp;
      }
    }
    double precision = static_cast<double>(tp) / static_cast<double>(predicted);
    double recall = static_cast<double>(tp) / static_cast<double>(positives);
    double gap = std::abs(precision - recall);
    if (gap < best_gap) {  // strict: ties keep the higher threshold
      best_gap = gap;
      best_t = t;
    }
  }
  return best_t;
}

double jaccard_coefficient(const std::set<int>& pred_set,
                           const std::set<int>& truth_set) {
  if (truth_set.empty()) throw metric_error("Jaccard undefined for empty truth set");
  size_t inter = 0;
  for (int v : pred_set) inter += truth_set.count(v);
  size_t uni = pred_set.size() + truth_set.size() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

AuditReport conditional_entropy_audit(const std::vector<int>& contexts,
                                      const std::vector<bool>& emotion_flags,
                                      std::optional<size_t> top_k) {
  if (contexts.size() != emotion_flags.size())
    throw shape_error("contexts/flags lengths differ");
  if (contexts.empty()) throw metric_error("audit needs at least one sample");

  std::map<int, std::pair<uint64_t, uint64_t>> counts;  // context -> (pos, neg)
  for (size_t i = 0; i < contexts.size(); ++i) {
    auto& c = counts[contexts[i]];
    if (emotion_flags[i]) ++c.first; else ++c.second;
  }

  if (top_k && counts.size() > *top_k) {
    std::vector<std::pair<int, uint64_t>> freq;
    for (const auto& [ctx, pn] : counts) freq.emplace_back(ctx, pn.first + pn.second);
    std::sort(freq.begin(), freq.end(), [](const auto& a, const auto& b) {
      return a.second != b.second ? a.second > b.second : a.first < b.first;
    });
    std::map<int, std::pair<uint64_t, uint64_t>> kept;
    for (size_t i = 0; i < *top_k; ++i) kept[freq[i].first] = counts[freq[i].first];
    counts = std::move(kept);
  }

  AuditReport report;
  uint64_t zero = 0;
  for (const auto& [ctx, pn] : counts) {
    double total = static_cast<double>(pn.first + pn.second);
    double h = 0.0;
    for (uint64_t k : {pn.first, pn.second}) {
      if (k == 0) continue;  // 0 log 0 = 0
      double p = static_cast<double>(k) / total;
      h -= p * std::log2(p);
    }
    report.per_context_entropy[ctx] = h;
    if (h == 0.0) ++zero;
    size_t bin = std::min<size_t>(4, static_cast<size_t>(h / 0.2));
    ++report.histogram[bin];
  }
  report.zero_entropy_fraction =
      static_cast<double>(zero) / static_cast<double>(counts.size());
  return report;
}

}  // namespace ccim::metrics
