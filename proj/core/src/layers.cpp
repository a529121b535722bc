#include "csi/nn/layers.hpp"

#include <cmath>

namespace csi::nn {

int ParamStore::add(const std::string& name, Mat init, bool decay) {
  for (const Param& q : params_)
    require(q.name != name, "param store: duplicate parameter name " + name);
  Param p;
  p.name = name;
  p.grad = Mat::Zero(init.rows(), init.cols());
  p.value = std::move(init);
  p.decay = decay;
  params_.push_back(std::move(p));
  return static_cast<int>(params_.size()) - 1;
}

int ParamStore::add_buffer(const std::string& name, Mat init) {
  for (const Buffer& q : buffers_)
    require(q.name != name, "param store: duplicate buffer name " + name);
  buffers_.push_back(Buffer{name, std::move(init)});
  return static_cast<int>(buffers_.size()) - 1;
}

void ParamStore::zero_grads() {
  for (Param& p : params_) p.grad.setZero();
}

long ParamStore::total_parameters() const {
  long n = 0;
  for (const Param& p : params_) n += p.value.size();
  return n;
}

Var Binding::var(int pidx) {
  require(pidx >= 0 && pidx < store_->param_count(), "binding: bad parameter index");
  int& vi = var_of_[static_cast<std::size_t>(pidx)];
  if (vi < 0) vi = tape_->leaf(store_->param(pidx).value, training_).idx;
  return Var{vi};
}

void Binding::pull_grads() {
  for (int i = 0; i < store_->param_count(); ++i) {
    int vi = var_of_[static_cast<std::size_t>(i)];
    if (vi >= 0 && tape_->has_grad(Var{vi})) store_->param(i).grad += tape_->grad(Var{vi});
  }
}

namespace {
Mat he_normal(int rows, int cols, int fan_in, Rng& rng) {
  Mat m(rows, cols);
  double s = std::sqrt(2.0 / fan_in);
  for (long i = 0; i < m.size(); ++i) m.data()[i] = s * rng.normal();
  return m;
}
}  // namespace

Dense Dense::make(ParamStore& ps, const std::string& name, int in, int out, bool bias, Rng& rng) {
  Dense d;
  d.w = ps.add(name + ".w", he_normal(out, in, in, rng), true);
  if (bias) d.b = ps.add(name + ".b", Mat::Zero(out, 1), false);
  return d;
}

Var Dense::forward(Binding& bind, Var x) const {
  Var y = bind.tape().matmul(bind.var(w), x);
  if (b >= 0) y = bind.tape().add_bias(y, bind.var(b));
  return y;
}

Conv2d Conv2d::make(ParamStore& ps, const std::string& name, int cin, int cout, int k, int stride,
                    int pad, int h, int width, Rng& rng) {
  Conv2d c;
  c.plan = make_conv_plan(cin, h, width, k, k, stride, pad);
  c.w = ps.add(name + ".w", he_normal(cout, cin * k * k, cin * k * k, rng), true);
  return c;
}

Var Conv2d::forward(Binding& bind, Var x) const {
  return bind.tape().conv2d(x, bind.var(w), plan);
}

BatchNorm2d BatchNorm2d::make(ParamStore& ps, const std::string& name, int channels) {
  BatchNorm2d bn;
  bn.channels = channels;
  bn.gamma = ps.add(name + ".gamma", Mat::Ones(channels, 1), false);
  bn.beta = ps.add(name + ".beta", Mat::Zero(channels, 1), false);
  bn.run_mean = ps.add_buffer(name + ".run_mean", Mat::Zero(channels, 1));
  bn.run_var = ps.add_buffer(name + ".run_var", Mat::Ones(channels, 1));
  return bn;
}

Var BatchNorm2d::forward(Binding& bind, Var x, int spatial) const {
  ParamStore& ps = bind.store();
  Mat batch_mean, batch_var;
  Var y = bind.tape().batchnorm(x, bind.var(gamma), bind.var(beta), channels, spatial,
                                bind.training(), ps.buffer(run_mean).value,
                                ps.buffer(run_var).value, &batch_mean, &batch_var);
  if (bind.training() && bind.update_stats()) {
    Mat& rm = ps.buffer(run_mean).value;
    Mat& rv = ps.buffer(run_var).value;
    rm = (1.0 - momentum) * rm + momentum * batch_mean;
    rv = (1.0 - momentum) * rv + momentum * batch_var;
  }
  return y;
}

SmallCnnEncoder::SmallCnnEncoder(ParamStore& ps, int in_channels, int hw, int width, Rng& rng) {
  require(hw >= 8 && hw % 8 == 0, "small encoder: input extent must be a multiple of 8, >= 8");
  require(width >= 1, "small encoder: width must be positive");
  struct Stage { int cin, cout; bool pool; };
  std::vector<Stage> stages = {
      {in_channels, width, false},
      {width, width, true},
      {width, 2 * width, true},
      {2 * width, 4 * width, true},
  };
  int h = hw;
  for (std::size_t i = 0; i < stages.size(); ++i) {
    Block b;
    std::string name = "enc.b" + std::to_string(i);
    b.conv = Conv2d::make(ps, name + ".conv", stages[i].cin, stages[i].cout, 3, 1, 1, h, h, rng);
    b.bn = BatchNorm2d::make(ps, name + ".bn", stages[i].cout);
    b.pool = stages[i].pool;
    b.h = h;
    b.w = h;
    blocks_.push_back(std::move(b));
    if (stages[i].pool) h /= 2;
  }
  final_spatial_ = h * h;
  final_channels_ = 4 * width;
  feat_dim_ = final_channels_;
}

Var SmallCnnEncoder::forward(Binding& bind, Var x) const {
  Tape& t = bind.tape();
  Var cur = x;
  for (const Block& b : blocks_) {
    cur = b.conv.forward(bind, cur);
    cur = b.bn.forward(bind, cur, b.h * b.w);
    cur = t.relu(cur);
    if (b.pool) cur = t.avgpool2(cur, b.bn.channels, b.h, b.w);
  }
  return t.global_avgpool(cur, final_channels_, final_spatial_);
}

ResNet18Encoder::ResNet18Encoder(ParamStore& ps, int in_channels, int hw, Rng& rng) {
  require(hw >= 8 && hw % 8 == 0, "resnet18: input extent must be a multiple of 8, >= 8");
  stem_ = Conv2d::make(ps, "enc.stem.conv", in_channels, 64, 3, 1, 1, hw, hw, rng);
  stem_bn_ = BatchNorm2d::make(ps, "enc.stem.bn", 64);
  stem_h_ = stem_w_ = hw;

  int widths[4] = {64, 128, 256, 512};
  int h = hw;
  int cin = 64;
  for (int stage = 0; stage < 4; ++stage) {
    for (int blk = 0; blk < 2; ++blk) {
      int stride = (stage > 0 && blk == 0) ? 2 : 1;
      int cout = widths[stage];
      BasicBlock b;
      std::string name = "enc.s" + std::to_string(stage) + ".b" + std::to_string(blk);
      b.conv1 = Conv2d::make(ps, name + ".conv1", cin, cout, 3, stride, 1, h, h, rng);
      int oh = (stride == 2) ? h / 2 : h;
      b.conv2 = Conv2d::make(ps, name + ".conv2", cout, cout, 3, 1, 1, oh, oh, rng);
      b.bn1 = BatchNorm2d::make(ps, name + ".bn1", cout);
      b.bn2 = BatchNorm2d::make(ps, name + ".bn2", cout);
      b.has_down = (stride != 1 || cin != cout);
      if (b.has_down) {
        b.down = Conv2d::make(ps, name + ".down", cin, cout, 1, stride, 0, h, h, rng);
        b.dbn = BatchNorm2d::make(ps, name + ".dbn", cout);
      }
      b.out_h = b.out_w = oh;
      blocks_.push_back(std::move(b));
      cin = cout;
      h = oh;
    }
  }
  final_spatial_ = h * h;
}

Var ResNet18Encoder::forward(Binding& bind, Var x) const {
  Tape& t = bind.tape();
  Var cur = stem_.forward(bind, x);
  cur = stem_bn_.forward(bind, cur, stem_h_ * stem_w_);
  cur = t.relu(cur);
  for (const BasicBlock& b : blocks_) {
    int spatial = b.out_h * b.out_w;
    Var identity = cur;
    Var y = b.conv1.forward(bind, cur);
    y = b.bn1.forward(bind, y, spatial);
    y = t.relu(y);
    y = b.conv2.forward(bind, y);
    y = b.bn2.forward(bind, y, spatial);
    if (b.has_down) {
      identity = b.down.forward(bind, identity);
      identity = b.dbn.forward(bind, identity, spatial);
    }
    cur = t.relu(t.add(y, identity));
  }
  return t.global_avgpool(cur, 512, final_spatial_);
}

std::unique_ptr<Encoder> make_encoder(const std::string& arch, ParamStore& ps, int in_channels,
                                      int hw, int width, Rng& rng) {
  if (arch == "small") return std::make_unique<SmallCnnEncoder>(ps, in_channels, hw, width, rng);
  if (arch == "resnet18") return std::make_unique<ResNet18Encoder>(ps, in_channels, hw, rng);
  fail("unknown encoder architecture: " + arch + " (valid: small, resnet18)");
}

}  // namespace csi::nn
