#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "csi/scoring.hpp"

namespace csi {

/// P(s_in > s_out) + 0.5 P(s_in = s_out) over all pairs, computed with the
/// rank statistic (midranks for ties); matches brute-force pair counting
/// exactly.
double auroc(const std::vector<double>& in_scores, const std::vector<double>& out_scores);

/// Separability of a transformation from the training distribution:
/// auroc of the contrastive score on in_test vs. transform(in_test).
/// Requires a state fitted with the identity-only shift family.
double oodness(const ModelBundle& bundle, const std::function<Image(const Image&)>& transform,
               const std::vector<Sample>& in_test, const ScorerState& state);

struct ScoreSummary {
  int count = 0;
  double mean = 0.0;
  double stdev = 0.0;
  double min = 0.0;
  double max = 0.0;
};

ScoreSummary summarize_scores(const std::vector<double>& scores);

struct EvalReport {
  std::string score_kind;
  std::map<std::string, double> auroc_per_source;
  double mean_auroc = 0.0;  // unweighted over sources
  std::optional<double> accuracy;
  std::optional<double> ece;
  std::map<std::string, ScoreSummary> score_summaries;  // "in" plus each source
  json config;
  std::uint64_t seed = 0;

  json to_json() const;
  static EvalReport from_json(const json& j);
  std::string to_table() const;
};

/// Assembles a report from precomputed scores; evaluate() composes this with
/// the scoring path.
EvalReport report_from_scores(const std::vector<double>& in_scores,
                              const std::map<std::string, std::vector<double>>& out_scores,
                              const std::string& score_kind, const json& config,
                              std::uint64_t seed);

EvalReport evaluate(const ModelBundle& bundle, const ScorerState& state,
                    const DatasetSplit& split, ScoreKind kind, const json& config);

void save_report(const std::string& path, const EvalReport& report);
EvalReport load_report(const std::string& path);

}  // namespace csi
