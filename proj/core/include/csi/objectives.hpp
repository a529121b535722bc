#pragma once

#include <optional>
#include <string>
#include <vector>

#include "csi/model.hpp"
#include "csi/nn/graph.hpp"

namespace csi {

enum class LossMode { Simclr, ConSi, ClsSi, Csi, Supclr, SupCsi, Ce };

const char* loss_mode_name(LossMode m);
LossMode loss_mode_from_name(const std::string& name);
bool loss_mode_uses_shifts(LossMode m);
bool loss_mode_needs_labels(LossMode m);

struct LossConfig {
  double temperature = 0.5;
  double lambda_cls = 1.0;
  LossMode mode = LossMode::Csi;
  bool align_shift_as_positive = false;  // ablation: shifted views become positives
  int max_views = 4096;                  // memory cap on encoder columns per step

  void validate() const;
};

/// Primitive contrastive loss on raw embedding vectors, cosine similarity.
double contrastive_loss(const Eigen::VectorXd& query,
                        const std::vector<Eigen::VectorXd>& positives,
                        const std::vector<Eigen::VectorXd>& negatives, double tau);

/// Group ids per view column for each mode. View order is shift-major, then
/// view (2 per sample), then sample: column = k*2B + v*B + i. Views sharing a
/// group id are mutual positives.
std::vector<long> contrastive_groups(LossMode mode, int batch, int k_shifts,
                                     const std::vector<int>& labels, bool align_shift);

nn::ContrastMasks masks_from_groups(const std::vector<long>& groups);

/// Core loss over view embeddings (columns): normalize, cosine gram, grouped
/// objective. Exposed at both graph and value level.
nn::Var grouped_nt_xent(nn::Tape& tape, nn::Var z_views, const std::vector<long>& groups,
                        double tau);
double grouped_nt_xent_value(const nn::Mat& z_views, const std::vector<long>& groups, double tau);

/// Captured intermediates of one loss-graph build, for oracles and logging.
struct LossProbe {
  nn::Mat z;                      // d_z x n, pipeline view order
  std::vector<long> groups;
  std::vector<int> shift_labels;  // per view
  std::vector<int> class_labels;  // per view, -1 when unlabeled
};

struct LossGraph {
  nn::Var total;
  nn::Var con;  // contrast component (invalid when absent)
  nn::Var cls;  // shift-classification component (invalid when absent)
  int views = 0;
};

/// Builds the full training graph for one batch: shift (S first), augment
/// twice (T), embed, and assemble the configured objective. `rng` drives the
/// augmentation draws.
LossGraph build_loss_graph(nn::Binding& bind, const ModelBundle& bundle,
                           const std::vector<Sample>& batch, const LossConfig& config,
                           const AugmentationPolicy& policy, Rng& rng,
                           LossProbe* probe = nullptr);

struct LossBreakdown {
  double total = 0.0;
  double con = 0.0;
  double cls = 0.0;
};

/// Value-only pipeline ops (no parameter update, no BN-stat mutation).
double simclr_loss(const std::vector<Sample>& batch, const AugmentationPolicy& policy,
                   const ModelBundle& bundle, double tau, Rng& rng, LossProbe* probe = nullptr);
double con_si_loss(const std::vector<Sample>& batch, const ShiftFamily& family,
                   const AugmentationPolicy& policy, const ModelBundle& bundle, double tau,
                   Rng& rng, LossProbe* probe = nullptr);
/// Mean shift-label cross-entropy over views that already carry shift_label.
double cls_si_loss(const std::vector<Sample>& shifted_views, const ModelBundle& bundle);
LossBreakdown csi_loss(const std::vector<Sample>& batch, const ShiftFamily& family,
                       const AugmentationPolicy& policy, const ModelBundle& bundle,
                       const LossConfig& config, Rng& rng, LossProbe* probe = nullptr);
double supclr_loss(const std::vector<Sample>& batch, const AugmentationPolicy& policy,
                   const ModelBundle& bundle, double tau, Rng& rng, LossProbe* probe = nullptr);
double sup_csi_loss(const std::vector<Sample>& batch, const ShiftFamily& family,
                    const AugmentationPolicy& policy, const ModelBundle& bundle, double tau,
                    Rng& rng, LossProbe* probe = nullptr);

}  // namespace csi
