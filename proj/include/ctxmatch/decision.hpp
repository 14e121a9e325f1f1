#pragma once

// Result combination and evaluation. The combination rule adds the baseline
// and context-model probabilities and shifts by one; the label is 1 exactly
// when the combined value reaches 0.5 (equivalently y_hat + y_bar >= 1.5).

#include <algorithm>
#include <map>
#include <string>
#include <vector>

#include "ctxmatch/ablation.hpp"
#include "ctxmatch/util.hpp"

namespace ctxmatch {

struct MatchPrediction {
  std::size_t pair_id = 0;
  double y_hat = 0.0;   // baseline probability
  double y_bar = 0.0;   // context-model probability
  double combined = 0.0;  // y_hat + y_bar - 1
  int label_out = 0;
};

// Optional experimental gate: when the baseline is confident enough, keep
// its decision alone. Off by default: the combination formula applies to
// every pair.
struct DecisionOptions {
  AblationMode ablation = AblationMode::None;
  bool confidence_gate = false;
  double confidence_tau = 0.3;
};

inline MatchPrediction result_select(double y_hat, double y_bar,
                                     const DecisionOptions& opts = {}) {
  if (!(y_hat >= 0.0 && y_hat <= 1.0))
    fail("result_select: y_hat outside [0,1]: ", y_hat);
  if (!(y_bar >= 0.0 && y_bar <= 1.0))
    fail("result_select: y_bar outside [0,1]: ", y_bar);
  MatchPrediction out;
  out.y_hat = y_hat;
  out.y_bar = y_bar;
  out.combined = y_hat + y_bar - 1.0;
  if (opts.ablation == AblationMode::RsOff) {
    out.label_out = y_bar >= 0.5 ? 1 : 0;
  } else if (opts.confidence_gate && std::fabs(y_hat - 0.5) >= opts.confidence_tau) {
    out.label_out = y_hat >= 0.5 ? 1 : 0;
  } else {
    out.label_out = out.combined >= 0.5 ? 1 : 0;
  }
  return out;
}

struct EvalReport {
  double accuracy = 0.0;
  double f1 = 0.0;  // positive class
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;

  std::size_t total() const { return tp + fp + tn + fn; }
};

// Exact confusion counting. Predictions and gold labels are aligned by
// pair id; any mismatch is an error that lists the offending ids.
inline EvalReport evaluate(const std::vector<MatchPrediction>& predictions,
                           const std::vector<std::pair<std::size_t, int>>& gold) {
  std::map<std::size_t, int> gold_by_id;
  for (auto& [id, label] : gold) {
    if (label != 0 && label != 1) fail("evaluate: gold label must be 0 or 1");
    if (!gold_by_id.emplace(id, label).second)
      fail("evaluate: duplicate gold id ", id);
  }
  std::string missing;
  std::map<std::size_t, int> seen;
  for (const auto& p : predictions) {
    auto it = gold_by_id.find(p.pair_id);
    if (it == gold_by_id.end()) {
      missing += " " + std::to_string(p.pair_id);
      continue;
    }
    if (!seen.emplace(p.pair_id, p.label_out).second)
      fail("evaluate: duplicate prediction for id ", p.pair_id);
  }
  if (!missing.empty()) fail("evaluate: predictions without gold labels:", missing);
  if (seen.size() != gold_by_id.size()) {
    std::string absent;
    for (auto& [id, label] : gold_by_id)
      if (!seen.count(id)) absent += " " + std::to_string(id);
    fail("evaluate: gold ids without predictions:", absent);
  }

  EvalReport r;
  for (const auto& p : predictions) {
    const int y = gold_by_id.at(p.pair_id);
    if (p.label_out == 1)
      y == 1 ? ++r.tp : ++r.fp;
    else
      y == 0 ? ++r.tn : ++r.fn;
  }
  r.accuracy = r.total() ? static_cast<double>(r.tp + r.tn) / static_cast<double>(r.total())
                         : 0.0;
  const std::size_t denom = 2 * r.tp + r.fp + r.fn;
  r.f1 = denom ? 2.0 * static_cast<double>(r.tp) / static_cast<double>(denom) : 0.0;
  return r;
}

}  // namespace ctxmatch
