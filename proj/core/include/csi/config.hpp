#pragma once

#include <string>
#include <vector>

#include "csi/scoring.hpp"
#include "csi/train.hpp"

namespace csi {

/// Flat dotted-key run configuration; unknown keys are rejected.
struct RunConfig {
  // data
  std::string data_kind = "scenes";  // scenes | file
  std::string data_path;             // .csid path when kind = file
  int data_per_class = 60;
  int data_hw = 32;
  int data_classes = 4;
  double data_test_fraction = 0.2;
  int data_target_class = 0;

  // model
  std::string model_arch = "small";
  int model_width = 16;
  int model_proj_dim = 128;

  // shifting transformations
  std::string shift_spec = "rotate";
  ShiftFamilyParams shift_params;

  // augmentation policy
  AugmentationPolicy aug;

  // objective
  std::string loss_mode = "csi";
  double loss_temperature = 0.5;
  double loss_lambda_cls = 1.0;
  bool loss_align_shift_as_positive = false;
  int loss_max_views = 4096;

  // optimizer / schedule
  OptimConfig optim;
  int train_epochs = 100;
  int train_batch_size = 128;

  // scoring
  std::string score_mode = "sim_norm";
  std::string score_kind = "s_csi";
  int score_ensemble_n = 4;
  double score_coreset_ratio = 1.0;
  bool score_controlled_policy = false;
  bool score_balanced = true;

  std::uint64_t seed = 1;
  std::string out_dir = "runs/out";

  /// Applies one dotted key; errors on unknown keys or unparseable values.
  void set(const std::string& key, const std::string& value);

  /// desk: small encoder at 32x32; paper: parity hyperparameters
  /// (resnet18, batch 512, lr 1.0, 1000 epochs).
  void apply_preset(const std::string& name);

  /// key=value lines, '#' comments, blank lines ignored.
  void apply_file(const std::string& path);
  static RunConfig from_file(const std::string& path);

  void validate() const;
  json to_json() const;

  // derived sub-configurations
  ShiftFamily family() const;
  LossConfig loss_config() const;
  TrainConfig train_config() const;
  ModelConfig model_config(int num_shifts, int num_classes) const;
  ScoringConfig scoring_config() const;
  LabeledDataset load_labeled() const;
  DatasetSplit load_split() const;

  static const std::vector<std::string>& known_keys();
};

}  // namespace csi
