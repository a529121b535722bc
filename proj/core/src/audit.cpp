#include "csi/audit.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

#include "csi/metrics.hpp"

namespace csi {

double total_variation(const Image& x) {
  require(x.h >= 1 && x.w >= 1 && x.c >= 1, "total_variation: empty image");
  double acc = 0.0;
  for (int ch = 0; ch < x.c; ++ch)
    for (int y = 0; y < x.h; ++y)
      for (int xx = 0; xx < x.w; ++xx) {
        double v = x.at(y, xx, ch);
        if (xx + 1 < x.w) {
          double d = v - x.at(y, xx + 1, ch);
          acc += d * d;
        }
        if (y + 1 < x.h) {
          double d = v - x.at(y + 1, xx, ch);
          acc += d * d;
        }
      }
  return acc;
}

double mean_total_variation(const std::vector<Sample>& train_set) {
  require(!train_set.empty(), "smoothness: empty training set");
  double acc = 0.0;
  for (const Sample& s : train_set) acc += total_variation(s.pixels);
  return acc / static_cast<double>(train_set.size());
}

double smoothness_score(const Image& x, double train_mean_tv) {
  return std::abs(total_variation(x) - train_mean_tv);
}

double smoothness_score(const Image& x, const std::vector<Sample>& train_set) {
  return smoothness_score(x, mean_total_variation(train_set));
}

SmoothnessStats smoothness_stats(const std::vector<Sample>& set, double train_mean_tv) {
  require(!set.empty(), "smoothness: empty sample set");
  SmoothnessStats stats;
  stats.train_mean_tv = train_mean_tv;
  stats.tv.reserve(set.size());
  stats.scores.reserve(set.size());
  for (const Sample& s : set) {
    double tv = total_variation(s.pixels);
    stats.tv.push_back(tv);
    stats.scores.push_back(std::abs(tv - train_mean_tv));
  }
  return stats;
}

json AuditReport::to_json() const {
  json rows_json = json::array();
  for (const AuditRow& r : rows)
    rows_json.push_back({{"name", r.name}, {"detect_auroc", r.detect_auroc}, {"flagged", r.flagged}});
  return {{"train_mean_tv", train_mean_tv}, {"threshold", threshold}, {"rows", rows_json}};
}

AuditReport AuditReport::from_json(const json& j) {
  AuditReport r;
  r.train_mean_tv = j.at("train_mean_tv").get<double>();
  r.threshold = j.at("threshold").get<double>();
  for (const json& row : j.at("rows"))
    r.rows.push_back({row.at("name").get<std::string>(), row.at("detect_auroc").get<double>(),
                      row.at("flagged").get<bool>()});
  return r;
}

std::string AuditReport::to_table() const {
  std::ostringstream out;
  out << std::fixed << std::setprecision(4);
  out << "train mean tv: " << train_mean_tv << "  threshold: " << threshold << "\n";
  out << std::left << std::setw(20) << "candidate" << std::right << std::setw(10) << "auroc"
      << "  detectable\n";
  for (const AuditRow& r : rows)
    out << std::left << std::setw(20) << r.name << std::right << std::setw(10) << r.detect_auroc
        << "  " << (r.flagged ? "yes" : "no") << "\n";
  return out.str();
}

AuditReport audit_report(const std::vector<Sample>& in_train, const std::vector<Sample>& in_test,
                         const std::map<std::string, std::vector<Sample>>& candidates,
                         double threshold) {
  require(!in_test.empty(), "audit: empty in-distribution test set");
  require(!candidates.empty(), "audit: no candidate sets");
  AuditReport report;
  report.train_mean_tv = mean_total_variation(in_train);
  report.threshold = threshold;
  SmoothnessStats in_stats = smoothness_stats(in_test, report.train_mean_tv);
  for (const auto& [name, samples] : candidates) {
    require(!samples.empty(), "audit: empty candidate set " + name);
    SmoothnessStats cand = smoothness_stats(samples, report.train_mean_tv);
    double a = auroc(cand.scores, in_stats.scores);
    report.rows.push_back({name, a, a > threshold});
  }
  return report;
}

AuditReport audit_report(const DatasetSplit& split, double threshold) {
  return audit_report(split.in_train, split.in_test, split.ood_test, threshold);
}

}  // namespace csi
