#pragma once

#include <map>
#include <string>
#include <vector>

#include "csi/data.hpp"

namespace csi {

/// Sum over 4-connected pixel pairs of squared channel differences, each
/// unordered pair counted once, summed across channels.
double total_variation(const Image& x);

double mean_total_variation(const std::vector<Sample>& train_set);

/// |TV(x) - mean TV of the training set|.
double smoothness_score(const Image& x, double train_mean_tv);
double smoothness_score(const Image& x, const std::vector<Sample>& train_set);

struct SmoothnessStats {
  double train_mean_tv = 0.0;
  std::vector<double> tv;      // per sample
  std::vector<double> scores;  // per sample, |tv - train_mean_tv|
};

SmoothnessStats smoothness_stats(const std::vector<Sample>& set, double train_mean_tv);

inline constexpr double kAuditThreshold = 0.8;

struct AuditRow {
  std::string name;
  double detect_auroc = 0.0;  // candidate scored as the detected side
  bool flagged = false;
};

/// Per-candidate separability of the smoothness score against the
/// in-distribution test set; rows above the threshold are flagged as
/// statistically detectable without any model.
struct AuditReport {
  double train_mean_tv = 0.0;
  double threshold = kAuditThreshold;
  std::vector<AuditRow> rows;

  json to_json() const;
  static AuditReport from_json(const json& j);
  std::string to_table() const;
};

AuditReport audit_report(const std::vector<Sample>& in_train, const std::vector<Sample>& in_test,
                         const std::map<std::string, std::vector<Sample>>& candidates,
                         double threshold = kAuditThreshold);
AuditReport audit_report(const DatasetSplit& split, double threshold = kAuditThreshold);

}  // namespace csi
