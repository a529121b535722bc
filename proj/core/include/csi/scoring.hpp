#pragma once

#include <functional>
#include <string>
#include <vector>

#include "csi/model.hpp"

namespace csi {

enum class ScoreMode { Sim, Norm, SimNorm };
enum class ScoreKind { SCon, SConSi, SClsSi, SCsi };

const char* score_mode_name(ScoreMode m);
ScoreMode score_mode_from_name(const std::string& name);
const char* score_kind_name(ScoreKind k);
ScoreKind score_kind_from_name(const std::string& name);

/// Per-shift training reference: unit embedding directions, their norms, and
/// the matching shift-logit values.
struct ReferenceSet {
  std::vector<nn::Mat> unit;                 // K entries, d_z x M
  std::vector<Eigen::VectorXd> norms;        // K entries, length M
  std::vector<Eigen::VectorXd> cls_values;   // K entries, length M

  int k() const { return static_cast<int>(unit.size()); }
  int m() const { return k() == 0 ? 0 : static_cast<int>(norms[0].size()); }
  void validate() const;
};

struct ScorerState {
  ReferenceSet reference;
  std::vector<double> lambda_con;  // K entries
  std::vector<double> lambda_cls;  // K entries
  ScoreMode score_mode = ScoreMode::SimNorm;
  int ensemble_n = 1;              // augmentation draws per shift when ensembling
  bool controlled_policy = false;
  bool balanced = true;            // false: all lambda forced to 1 (ablation)
  AugmentationPolicy policy;       // used for ensembling draws
  ShiftFamily family;              // family the references were built with
  double coreset_ratio = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct ScoringConfig {
  ScoreMode score_mode = ScoreMode::SimNorm;
  int ensemble_n = 4;  // per-shift draw budget (total budget = 4K by default)
  bool controlled_policy = false;
  bool balanced = true;
  double coreset_ratio = 1.0;
  std::uint64_t seed = 0;
  AugmentationPolicy policy;
};

/// Computes per-shift reference embeddings of the training set in evaluation
/// mode (clean shifted images, no random augmentation) plus balancing terms.
ScorerState fit_scorer(const ModelBundle& bundle, const ShiftFamily& family,
                       const std::vector<Sample>& train_set, const ScoringConfig& config);

/// Recomputes the balancing terms from the stored reference:
/// lambda_con[k] = M / sum_m norm, lambda_cls[k] = M / |sum_m cls value|.
void recompute_lambdas(ScorerState& state);

/// Scores raw per-shift query embeddings (column k = embedding of the k-th
/// shifted input) plus matching shift-logit values, without the encoder.
/// Kind s_con uses column 0 only.
double score_embedding(const nn::Mat& z_per_shift, const Eigen::VectorXd& cls_per_shift,
                       ScoreKind kind, const ScorerState& state);

/// Single-evaluation scores (no augmentation ensembling).
double s_con(const Image& x, const ScorerState& state, const ModelBundle& bundle);
double s_con_si(const Image& x, const ScorerState& state, const ModelBundle& bundle);
double s_cls_si(const Image& x, const ScorerState& state, const ModelBundle& bundle);
double s_csi(const Image& x, const ScorerState& state, const ModelBundle& bundle);

/// Mean of score_fn over n transforms drawn from the policy.
double ensemble_score(const std::function<double(const Image&)>& score_fn, const Image& x,
                      const AugmentationPolicy& policy, int n, Rng& rng);

/// Batch scoring path: honors state.ensemble_n / controlled_policy with
/// independent draws per (shift, sample, draw); kind s_con always uses a
/// single un-augmented evaluation. Deterministic given the state seed.
std::vector<double> score_samples(const std::vector<Image>& xs, ScoreKind kind,
                                  const ScorerState& state, const ModelBundle& bundle);

/// Spherical k-means compression to ceil(ratio*M) centers per shift; centers
/// are renormalized means paired with member-mean norms/logit values.
/// ratio = 1 returns the input unchanged.
ReferenceSet build_coreset(const ReferenceSet& reference, double ratio, std::uint64_t rng_seed);

void save_scorer(const std::string& path, const ScorerState& state, const json& run_config);
ScorerState load_scorer(const std::string& path, json* run_config = nullptr);

}  // namespace csi
