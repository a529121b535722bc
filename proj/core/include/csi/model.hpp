#pragma once

#include <memory>
#include <string>
#include <vector>

#include "csi/data.hpp"
#include "csi/nn/layers.hpp"
#include "csi/transforms.hpp"

namespace csi {

struct ModelConfig {
  std::string arch = "small";  // small | resnet18
  int image_hw = 32;
  int in_channels = 3;
  int width = 16;      // small-cnn base width
  int proj_dim = 128;  // contrastive feature dimension d_z
  int num_shifts = 1;  // K; shift head rows
  int num_classes = 0;           // C; 0 disables class/joint heads
  bool with_class_head = false;  // C logits
  bool with_joint_head = false;  // C*K logits

  void validate() const;
  json to_json() const;
  static ModelConfig from_json(const json& j);
};

/// Encoder f, projection g (2-layer MLP, hidden width = encoder width),
/// shift head W_S (bias-free rows, one per shift), optional class and joint
/// linear heads. Activations flow feature-major (columns = samples); the
/// public batch API returns row-major (rows = samples).
class ModelBundle {
 public:
  ModelBundle(const ModelConfig& config, const ShiftFamily& family, std::uint64_t init_seed);

  const ModelConfig& config() const { return config_; }
  const ShiftFamily& family() const { return family_; }
  nn::ParamStore& params() { return store_; }
  const nn::ParamStore& params() const { return store_; }
  int feature_dim() const { return encoder_->feature_dim(); }

  struct ForwardVars {
    nn::Var features;  // d_f x B
    nn::Var z;         // d_z x B, unnormalized
  };
  ForwardVars forward(nn::Binding& bind, const nn::Mat& pixels) const;
  nn::Var shift_logits_var(nn::Binding& bind, nn::Var features) const;
  nn::Var class_logits_var(nn::Binding& bind, nn::Var features) const;
  nn::Var joint_logits_var(nn::Binding& bind, nn::Var features) const;

  /// Evaluation-mode forwards over sample batches; rows = samples.
  nn::Mat embed(const std::vector<Image>& batch) const;          // B x d_z
  nn::Mat encode(const std::vector<Image>& batch) const;         // B x d_f
  nn::Mat shift_logits(const std::vector<Image>& batch) const;   // B x K
  nn::Mat class_logits(const std::vector<Image>& batch) const;   // B x C
  nn::Mat joint_logits(const std::vector<Image>& batch) const;   // B x (C*K)

  bool has_shift_head() const { return config_.num_shifts >= 1; }
  bool has_class_head() const { return config_.with_class_head; }
  bool has_joint_head() const { return config_.with_joint_head; }

  /// Shift-head weight rows W_S as a K x d_f matrix.
  nn::Mat shift_head_weights() const;

  void save_checkpoint(const std::string& path, const json& run_config) const;
  static std::unique_ptr<ModelBundle> load_checkpoint(const std::string& path,
                                                      json* run_config = nullptr);

 private:
  ModelConfig config_;
  ShiftFamily family_;
  nn::ParamStore store_;
  std::unique_ptr<nn::Encoder> encoder_;
  nn::Dense proj1_, proj2_;
  nn::Dense shift_head_;
  nn::Dense class_head_;
  nn::Dense joint_head_;
};

/// Packs images into a (C*H*W) x B column batch (channel-major rows).
nn::Mat pack_batch(const std::vector<Image>& batch, int hw, int channels);
Image unpack_column(const nn::Mat& m, long col, int hw, int channels);

std::vector<Image> pixels_of(const std::vector<Sample>& samples);

}  // namespace csi
