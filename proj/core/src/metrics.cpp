#include "csi/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

namespace csi {

double auroc(const std::vector<double>& in_scores, const std::vector<double>& out_scores) {
  require(!in_scores.empty() && !out_scores.empty(), "auroc: empty score list");
  struct Entry {
    double score;
    bool is_in;
  };
  std::vector<Entry> all;
  all.reserve(in_scores.size() + out_scores.size());
  for (double s : in_scores) {
    require(std::isfinite(s), "auroc: non-finite score");
    all.push_back({s, true});
  }
  for (double s : out_scores) {
    require(std::isfinite(s), "auroc: non-finite score");
    all.push_back({s, false});
  }
  std::sort(all.begin(), all.end(),
            [](const Entry& a, const Entry& b) { return a.score < b.score; });

  // rank-sum with midranks: ranks are exact half-integers, so the numerator
  // matches pairwise counting bit-for-bit
  double rank_sum_in = 0.0;
  std::size_t i = 0;
  while (i < all.size()) {
    std::size_t j = i;
    while (j < all.size() && all[j].score == all[i].score) ++j;
    double midrank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
    for (std::size_t t = i; t < j; ++t)
      if (all[t].is_in) rank_sum_in += midrank;
    i = j;
  }
  const double n_in = static_cast<double>(in_scores.size());
  const double n_out = static_cast<double>(out_scores.size());
  return (rank_sum_in - n_in * (n_in + 1.0) / 2.0) / (n_in * n_out);
}

double oodness(const ModelBundle& bundle, const std::function<Image(const Image&)>& transform,
               const std::vector<Sample>& in_test, const ScorerState& state) {
  require(state.reference.k() == 1, "oodness: state must be fitted with the identity family");
  require(!in_test.empty(), "oodness: empty test set");
  std::vector<Image> clean = pixels_of(in_test);
  std::vector<Image> moved;
  moved.reserve(clean.size());
  for (const Image& im : clean) moved.push_back(transform(im));
  std::vector<double> in_scores = score_samples(clean, ScoreKind::SCon, state, bundle);
  std::vector<double> out_scores = score_samples(moved, ScoreKind::SCon, state, bundle);
  return auroc(in_scores, out_scores);
}

ScoreSummary summarize_scores(const std::vector<double>& scores) {
  require(!scores.empty(), "summarize_scores: empty list");
  ScoreSummary s;
  s.count = static_cast<int>(scores.size());
  s.min = scores[0];
  s.max = scores[0];
  double sum = 0.0;
  for (double v : scores) {
    sum += v;
    s.min = std::min(s.min, v);
    s.max = std::max(s.max, v);
  }
  s.mean = sum / s.count;
  double var = 0.0;
  for (double v : scores) var += (v - s.mean) * (v - s.mean);
  s.stdev = std::sqrt(var / s.count);
  return s;
}

namespace {

json summary_to_json(const ScoreSummary& s) {
  return {{"count", s.count}, {"mean", s.mean}, {"stdev", s.stdev}, {"min", s.min}, {"max", s.max}};
}

ScoreSummary summary_from_json(const json& j) {
  ScoreSummary s;
  s.count = j.at("count").get<int>();
  s.mean = j.at("mean").get<double>();
  s.stdev = j.at("stdev").get<double>();
  s.min = j.at("min").get<double>();
  s.max = j.at("max").get<double>();
  return s;
}

}  // namespace

json EvalReport::to_json() const {
  json j;
  j["score_kind"] = score_kind;
  j["auroc_per_source"] = auroc_per_source;
  j["mean_auroc"] = mean_auroc;
  j["accuracy"] = accuracy ? json(*accuracy) : json(nullptr);
  j["ece"] = ece ? json(*ece) : json(nullptr);
  json sums = json::object();
  for (const auto& [name, s] : score_summaries) sums[name] = summary_to_json(s);
  j["score_summaries"] = sums;
  j["config"] = config;
  j["seed"] = seed;
  return j;
}

EvalReport EvalReport::from_json(const json& j) {
  EvalReport r;
  r.score_kind = j.at("score_kind").get<std::string>();
  r.auroc_per_source = j.at("auroc_per_source").get<std::map<std::string, double>>();
  r.mean_auroc = j.at("mean_auroc").get<double>();
  if (!j.at("accuracy").is_null()) r.accuracy = j.at("accuracy").get<double>();
  if (!j.at("ece").is_null()) r.ece = j.at("ece").get<double>();
  for (const auto& [name, s] : j.at("score_summaries").items())
    r.score_summaries[name] = summary_from_json(s);
  r.config = j.at("config");
  r.seed = j.at("seed").get<std::uint64_t>();
  return r;
}

std::string EvalReport::to_table() const {
  std::ostringstream out;
  out << std::fixed << std::setprecision(4);
  out << "score kind: " << score_kind << "  seed: " << seed << "\n";
  out << std::left << std::setw(20) << "source" << std::right << std::setw(8) << "auroc"
      << std::setw(8) << "n" << std::setw(10) << "mean" << std::setw(10) << "stdev" << "\n";
  for (const auto& [name, a] : auroc_per_source) {
    out << std::left << std::setw(20) << name << std::right << std::setw(8) << a;
    auto it = score_summaries.find(name);
    if (it != score_summaries.end())
      out << std::setw(8) << it->second.count << std::setw(10) << it->second.mean << std::setw(10)
          << it->second.stdev;
    out << "\n";
  }
  out << std::left << std::setw(20) << "mean" << std::right << std::setw(8) << mean_auroc << "\n";
  if (accuracy) out << "accuracy: " << *accuracy << "\n";
  if (ece) out << "ece: " << *ece << "\n";
  return out.str();
}

EvalReport report_from_scores(const std::vector<double>& in_scores,
                              const std::map<std::string, std::vector<double>>& out_scores,
                              const std::string& score_kind, const json& config,
                              std::uint64_t seed) {
  require(!out_scores.empty(), "report: at least one out-of-distribution source required");
  EvalReport r;
  r.score_kind = score_kind;
  r.config = config;
  r.seed = seed;
  r.score_summaries["in"] = summarize_scores(in_scores);
  double acc = 0.0;
  for (const auto& [name, scores] : out_scores) {
    require(name != "in", "report: source name 'in' is reserved");
    double a = auroc(in_scores, scores);
    r.auroc_per_source[name] = a;
    r.score_summaries[name] = summarize_scores(scores);
    acc += a;
  }
  r.mean_auroc = acc / static_cast<double>(out_scores.size());
  return r;
}

EvalReport evaluate(const ModelBundle& bundle, const ScorerState& state,
                    const DatasetSplit& split, ScoreKind kind, const json& config) {
  require(!split.in_test.empty(), "evaluate: empty in-distribution test set");
  require(!split.ood_test.empty(), "evaluate: no out-of-distribution test sets");
  std::vector<double> in_scores = score_samples(pixels_of(split.in_test), kind, state, bundle);
  std::map<std::string, std::vector<double>> out_scores;
  for (const auto& [name, samples] : split.ood_test) {
    require(!samples.empty(), "evaluate: empty out-of-distribution source " + name);
    out_scores[name] = score_samples(pixels_of(samples), kind, state, bundle);
  }
  return report_from_scores(in_scores, out_scores, score_kind_name(kind), config, state.seed);
}

void save_report(const std::string& path, const EvalReport& report) {
  write_text_file(path, report.to_json().dump(2) + "\n");
}

EvalReport load_report(const std::string& path) {
  return EvalReport::from_json(json::parse(read_text_file(path)));
}

}  // namespace csi
