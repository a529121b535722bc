#pragma once

#include <string>
#include <vector>

#include "csi/objectives.hpp"

namespace csi {

struct OptimConfig {
  double lr = 0.5;            // peak learning rate after warmup
  double momentum = 0.9;
  double weight_decay = 1e-6;
  int warmup_epochs = 10;     // linear warmup, then cosine decay (no restart)

  void validate() const;
};

struct TrainConfig {
  LossConfig loss;
  AugmentationPolicy policy;
  OptimConfig optim;
  int epochs = 100;
  int batch_size = 128;
  std::uint64_t seed = 0;
  std::string log_path;  // JSONL per-epoch loss components; empty disables

  void validate() const;
};

struct TrainResult {
  int steps = 0;
  double final_loss = 0.0;
};

/// Momentum-SGD step over a parameter store (velocity owned by caller, one
/// matrix per parameter, zero-initialized).
void sgd_step(nn::ParamStore& store, std::vector<nn::Mat>& velocity, double lr, double momentum,
              double weight_decay);

/// Warmup/cosine learning-rate factor in [0,1] at a given step.
double lr_schedule(int step, int total_steps, int warmup_steps);

TrainResult train(ModelBundle& bundle, const std::vector<Sample>& train_set,
                  const TrainConfig& config);

}  // namespace csi
