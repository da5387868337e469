#pragma once

#include <map>
#include <string>
#include <vector>

#include "sketchgrasp/geometry.hpp"

namespace sketchgrasp {

/// Ranked predictions for one sketch query and the queried object's grasps.
struct QueryOutcome {
  std::string category;
  std::vector<OrientedRect> ranked;
  std::vector<OrientedRect> gts;
};

struct RetrievalScores {
  std::map<int, double> precision;  // k -> P@k
  std::map<int, double> recall;     // k -> R@k
  int queries = 0;
  friend bool operator==(const RetrievalScores&, const RetrievalScores&) = default;
};

struct EvalReport {
  std::vector<int> ks;
  RetrievalScores overall;
  std::map<std::string, RetrievalScores> per_category;
  std::string label;  // e.g. "testA"
  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

inline const std::vector<int> kDefaultKs{1, 3, 5, 10};

/// P@k averages, over queries, the fraction of correct grasps among the top
/// min(k, returned) predictions (an empty return scores 0). R@k is the fraction
/// of queries with at least one correct grasp in the top k.
/// Throws std::invalid_argument on zero queries.
EvalReport precision_recall_at_k(const std::vector<QueryOutcome>& queries,
                                 const std::vector<int>& ks = kDefaultKs);

std::string report_to_json(const EvalReport& report);
EvalReport report_from_json(const std::string& text);

/// Fixed-width table: one row per report, R@k columns then P@k columns, in
/// percent with two decimals.
std::string reports_to_table(const std::vector<EvalReport>& reports);

}  // namespace sketchgrasp
