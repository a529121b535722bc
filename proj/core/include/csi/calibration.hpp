#pragma once

#include <string>
#include <vector>

#include "csi/model.hpp"

namespace csi {

inline constexpr int kDefaultBins = 15;

/// Numerically stable softmax.
Eigen::VectorXd softmax(const Eigen::VectorXd& logits);

/// Maximum entry of a probability vector; rejects invalid simplices.
double confidence(const Eigen::VectorXd& prob);

/// Shift-ensembled class probabilities: softmax of (1/K) sum_k of the k-th
/// C-logit block of the joint head evaluated on the k-th shifted input.
Eigen::VectorXd csi_ens_prob(const ModelBundle& bundle, const Image& x, const ShiftFamily& family);

/// Same with additional augmentation ensembling (draws per shift).
Eigen::VectorXd csi_ens_prob(const ModelBundle& bundle, const Image& x, const ShiftFamily& family,
                             const AugmentationPolicy& policy, int draws, Rng& rng);

/// Equal-width (left-open, right-closed] partition of (0,1].
struct CalibrationBins {
  int m_bins = kDefaultBins;
  std::vector<int> count;
  std::vector<double> mean_confidence;  // 0 where empty
  std::vector<double> accuracy;         // 0 where empty

  int total() const;
  double ece() const;  // sum_m (count_m / N) * |accuracy_m - confidence_m|
  std::string to_table() const;
};

int bin_index(double conf, int m_bins);

CalibrationBins calibration_bins(const std::vector<double>& confidences,
                                 const std::vector<int>& correct, int m_bins = kDefaultBins);

double ece(const std::vector<double>& confidences, const std::vector<int>& correct,
           int m_bins = kDefaultBins);

enum class HeadKind { Class, Joint };

struct HeadTrainConfig {
  double lr = 0.1;
  double momentum = 0.9;
  int epochs = 100;       // lr drops x10 at 60/75/90% progress
  int batch_size = 128;
  std::uint64_t seed = 0;
  std::string log_path;   // JSONL; empty disables
};

/// Trains one linear head on frozen evaluation-mode features (joint head:
/// features of every shifted view, labels shift-major). Only head parameters
/// change.
void train_linear_heads(ModelBundle& bundle, const std::vector<Sample>& train_set, HeadKind kind,
                        const HeadTrainConfig& config);

}  // namespace csi
