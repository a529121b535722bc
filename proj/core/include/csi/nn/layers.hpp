#pragma once

#include <memory>
#include <string>
#include <vector>

#include "csi/nn/graph.hpp"

namespace csi::nn {

struct Param {
  std::string name;
  Mat value;
  Mat grad;
  bool decay = true;  // weight decay applies
};

struct Buffer {
  std::string name;
  Mat value;
};

/// Named parameter/buffer registry shared by all layers of one model.
class ParamStore {
 public:
  int add(const std::string& name, Mat init, bool decay = true);
  int add_buffer(const std::string& name, Mat init);

  Param& param(int i) { return params_[static_cast<std::size_t>(i)]; }
  const Param& param(int i) const { return params_[static_cast<std::size_t>(i)]; }
  Buffer& buffer(int i) { return buffers_[static_cast<std::size_t>(i)]; }
  const Buffer& buffer(int i) const { return buffers_[static_cast<std::size_t>(i)]; }

  int param_count() const { return static_cast<int>(params_.size()); }
  int buffer_count() const { return static_cast<int>(buffers_.size()); }

  void zero_grads();
  long total_parameters() const;

  std::vector<Param>& params() { return params_; }
  const std::vector<Param>& params() const { return params_; }
  std::vector<Buffer>& buffers() { return buffers_; }
  const std::vector<Buffer>& buffers() const { return buffers_; }

 private:
  std::vector<Param> params_;
  std::vector<Buffer> buffers_;
};

/// Per-forward-pass bridge: lazily registers store parameters as tape leaves
/// and pulls gradients back after backward().
class Binding {
 public:
  Binding(Tape& tape, ParamStore& store, bool training)
      : Binding(tape, store, training, training) {}
  Binding(Tape& tape, ParamStore& store, bool training, bool update_stats)
      : tape_(&tape), store_(&store), training_(training), update_stats_(update_stats),
        var_of_(static_cast<std::size_t>(store.param_count()), -1) {}

  Var var(int pidx);
  bool training() const { return training_; }
  bool update_stats() const { return update_stats_; }
  Tape& tape() { return *tape_; }
  ParamStore& store() { return *store_; }

  /// Accumulates tape gradients of every bound parameter into Param::grad.
  void pull_grads();

 private:
  Tape* tape_;
  ParamStore* store_;
  bool training_;
  bool update_stats_;
  std::vector<int> var_of_;
};

struct Dense {
  int w = -1, b = -1;  // b = -1 means no bias
  static Dense make(ParamStore& ps, const std::string& name, int in, int out, bool bias, Rng& rng);
  Var forward(Binding& bind, Var x) const;
};

struct Conv2d {
  int w = -1;
  ConvPlan plan;
  static Conv2d make(ParamStore& ps, const std::string& name, int cin, int cout, int k,
                     int stride, int pad, int h, int width, Rng& rng);
  Var forward(Binding& bind, Var x) const;
};

struct BatchNorm2d {
  int gamma = -1, beta = -1;
  int run_mean = -1, run_var = -1;  // buffer indices
  int channels = 0;
  double momentum = 0.1;
  static BatchNorm2d make(ParamStore& ps, const std::string& name, int channels);
  Var forward(Binding& bind, Var x, int spatial) const;
};

/// Interface for pixel-batch encoders; input is (C*H*W) x B, output d_f x B.
class Encoder {
 public:
  virtual ~Encoder() = default;
  virtual Var forward(Binding& bind, Var x) const = 0;
  virtual int feature_dim() const = 0;
};

class SmallCnnEncoder : public Encoder {
 public:
  SmallCnnEncoder(ParamStore& ps, int in_channels, int hw, int width, Rng& rng);
  Var forward(Binding& bind, Var x) const override;
  int feature_dim() const override { return feat_dim_; }

 private:
  struct Block {
    Conv2d conv;
    BatchNorm2d bn;
    int h = 0, w = 0;   // output spatial extent
    bool pool = false;  // avgpool2 after activation
  };
  std::vector<Block> blocks_;
  int feat_dim_ = 0;
  int final_spatial_ = 0;
  int final_channels_ = 0;
};

class ResNet18Encoder : public Encoder {
 public:
  ResNet18Encoder(ParamStore& ps, int in_channels, int hw, Rng& rng);
  Var forward(Binding& bind, Var x) const override;
  int feature_dim() const override { return 512; }

 private:
  struct BasicBlock {
    Conv2d conv1, conv2;
    BatchNorm2d bn1, bn2;
    Conv2d down;        // 1x1 when stride 2 or channel change, else unused
    BatchNorm2d dbn;
    bool has_down = false;
    int out_h = 0, out_w = 0;
  };
  Conv2d stem_;
  BatchNorm2d stem_bn_;
  int stem_h_ = 0, stem_w_ = 0;
  std::vector<BasicBlock> blocks_;
  int final_spatial_ = 0;
};

std::unique_ptr<Encoder> make_encoder(const std::string& arch, ParamStore& ps, int in_channels,
                                      int hw, int width, Rng& rng);

}  // namespace csi::nn
