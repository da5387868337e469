#include "sketchgrasp/metrics.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace sketchgrasp {

namespace {

using nlohmann::json;

RetrievalScores score(const std::vector<const QueryOutcome*>& queries, const std::vector<int>& ks) {
  RetrievalScores out;
  out.queries = static_cast<int>(queries.size());
  for (int k : ks) {
    double p_sum = 0.0;
    int hits = 0;
    for (const QueryOutcome* q : queries) {
      const int returned = std::min<int>(k, static_cast<int>(q->ranked.size()));
      int correct = 0;
      for (int i = 0; i < returned; ++i) {
        if (is_correct_grasp(q->ranked[i], q->gts)) ++correct;
      }
      if (returned > 0) p_sum += static_cast<double>(correct) / returned;
      if (correct > 0) ++hits;
    }
    out.precision[k] = p_sum / static_cast<double>(queries.size());
    out.recall[k] = static_cast<double>(hits) / static_cast<double>(queries.size());
  }
  return out;
}

json scores_to_json(const RetrievalScores& s) {
  json p = json::object();
  json r = json::object();
  for (const auto& [k, v] : s.precision) p[std::to_string(k)] = v;
  for (const auto& [k, v] : s.recall) r[std::to_string(k)] = v;
  return {{"precision", p}, {"recall", r}, {"queries", s.queries}};
}

RetrievalScores scores_from_json(const json& j) {
  RetrievalScores s;
  for (const auto& [k, v] : j.at("precision").items()) s.precision[std::stoi(k)] = v.get<double>();
  for (const auto& [k, v] : j.at("recall").items()) s.recall[std::stoi(k)] = v.get<double>();
  s.queries = j.at("queries").get<int>();
  return s;
}

}  // namespace

EvalReport precision_recall_at_k(const std::vector<QueryOutcome>& queries,
                                 const std::vector<int>& ks) {
  if (queries.empty()) throw std::invalid_argument("precision_recall_at_k: zero queries");
  if (ks.empty()) throw std::invalid_argument("precision_recall_at_k: no k values");
  for (int k : ks) {
    if (k <= 0) throw std::invalid_argument("precision_recall_at_k: k must be positive");
  }
  EvalReport report;
  report.ks = ks;
  std::vector<const QueryOutcome*> all;
  std::map<std::string, std::vector<const QueryOutcome*>> by_category;
  for (const auto& q : queries) {
    all.push_back(&q);
    by_category[q.category].push_back(&q);
  }
  report.overall = score(all, ks);
  for (const auto& [cat, qs] : by_category) report.per_category[cat] = score(qs, ks);
  return report;
}

std::string report_to_json(const EvalReport& report) {
  json per = json::object();
  for (const auto& [cat, s] : report.per_category) per[cat] = scores_to_json(s);
  json doc{{"label", report.label},
           {"ks", report.ks},
           {"overall", scores_to_json(report.overall)},
           {"per_category", per}};
  return doc.dump(2);
}

EvalReport report_from_json(const std::string& text) {
  const json doc = json::parse(text);
  EvalReport r;
  r.label = doc.value("label", "");
  r.ks = doc.at("ks").get<std::vector<int>>();
  r.overall = scores_from_json(doc.at("overall"));
  for (const auto& [cat, s] : doc.at("per_category").items()) r.per_category[cat] = scores_from_json(s);
  return r;
}

std::string reports_to_table(const std::vector<EvalReport>& reports) {
  std::ostringstream out;
  char buf[64];
  std::vector<int> ks = reports.empty() ? kDefaultKs : reports.front().ks;
  std::snprintf(buf, sizeof buf, "%-12s", "split");
  out << buf;
  for (int k : ks) {
    std::snprintf(buf, sizeof buf, " %8s", ("R@" + std::to_string(k)).c_str());
    out << buf;
  }
  for (int k : ks) {
    std::snprintf(buf, sizeof buf, " %8s", ("P@" + std::to_string(k)).c_str());
    out << buf;
  }
  out << '\n';
  for (const auto& r : reports) {
    std::snprintf(buf, sizeof buf, "%-12s", r.label.empty() ? "-" : r.label.c_str());
    out << buf;
    for (int k : ks) {
      std::snprintf(buf, sizeof buf, " %8.2f", 100.0 * r.overall.recall.at(k));
      out << buf;
    }
    for (int k : ks) {
      std::snprintf(buf, sizeof buf, " %8.2f", 100.0 * r.overall.precision.at(k));
      out << buf;
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace sketchgrasp
