#include "csi/model.hpp"

#include "csi/serialize.hpp"

namespace csi {

using nn::Mat;
using nn::Var;

void ModelConfig::validate() const {
  require(arch == "small" || arch == "resnet18",
          "model config: unknown arch " + arch + " (valid: small, resnet18)");
  require(image_hw >= 8 && image_hw % 8 == 0, "model config: image extent must be a multiple of 8");
  require(in_channels == 1 || in_channels == 3, "model config: channels must be 1 or 3");
  require(width >= 1, "model config: width must be positive");
  require(proj_dim >= 1, "model config: projection dimension must be positive");
  require(num_shifts >= 1, "model config: K must be >= 1");
  if (with_class_head || with_joint_head)
    require(num_classes >= 1, "model config: class/joint head requires num_classes >= 1");
}

json ModelConfig::to_json() const {
  return {{"arch", arch},
          {"image_hw", image_hw},
          {"in_channels", in_channels},
          {"width", width},
          {"proj_dim", proj_dim},
          {"num_shifts", num_shifts},
          {"num_classes", num_classes},
          {"with_class_head", with_class_head},
          {"with_joint_head", with_joint_head}};
}

ModelConfig ModelConfig::from_json(const json& j) {
  ModelConfig c;
  c.arch = j.at("arch").get<std::string>();
  c.image_hw = j.at("image_hw").get<int>();
  c.in_channels = j.at("in_channels").get<int>();
  c.width = j.at("width").get<int>();
  c.proj_dim = j.at("proj_dim").get<int>();
  c.num_shifts = j.at("num_shifts").get<int>();
  c.num_classes = j.at("num_classes").get<int>();
  c.with_class_head = j.at("with_class_head").get<bool>();
  c.with_joint_head = j.at("with_joint_head").get<bool>();
  c.validate();
  return c;
}

ModelBundle::ModelBundle(const ModelConfig& config, const ShiftFamily& family,
                         std::uint64_t init_seed)
    : config_(config), family_(family) {
  config_.validate();
  family_.validate();
  require(config_.num_shifts == family_.k(),
          "model: shift head rows (" + std::to_string(config_.num_shifts) +
              ") must equal family K (" + std::to_string(family_.k()) + ")");
  Rng rng(derive_seed(init_seed, 0x6d6f64656cULL));
  encoder_ = nn::make_encoder(config_.arch, store_, config_.in_channels, config_.image_hw,
                              config_.width, rng);
  int df = encoder_->feature_dim();
  proj1_ = nn::Dense::make(store_, "proj.fc1", df, df, true, rng);
  proj2_ = nn::Dense::make(store_, "proj.fc2", df, config_.proj_dim, true, rng);
  shift_head_ = nn::Dense::make(store_, "head.shift", df, config_.num_shifts, false, rng);
  if (config_.with_class_head)
    class_head_ = nn::Dense::make(store_, "head.class", df, config_.num_classes, true, rng);
  if (config_.with_joint_head)
    joint_head_ = nn::Dense::make(store_, "head.joint", df,
                                  config_.num_classes * config_.num_shifts, true, rng);
}

ModelBundle::ForwardVars ModelBundle::forward(nn::Binding& bind, const Mat& pixels) const {
  require(pixels.rows() ==
              static_cast<long>(config_.in_channels) * config_.image_hw * config_.image_hw,
          "model forward: pixel rows do not match configured input size");
  require(pixels.cols() >= 1, "model forward: empty batch");
  nn::Tape& t = bind.tape();
  Var x = t.leaf(pixels, false);
  Var f = encoder_->forward(bind, x);
  Var h = t.relu(proj1_.forward(bind, f));
  Var z = proj2_.forward(bind, h);
  return {f, z};
}

Var ModelBundle::shift_logits_var(nn::Binding& bind, Var features) const {
  return shift_head_.forward(bind, features);
}

Var ModelBundle::class_logits_var(nn::Binding& bind, Var features) const {
  require(config_.with_class_head, "model: class head absent");
  return class_head_.forward(bind, features);
}

Var ModelBundle::joint_logits_var(nn::Binding& bind, Var features) const {
  require(config_.with_joint_head, "model: joint head absent");
  return joint_head_.forward(bind, features);
}

namespace {
Mat eval_pass(const ModelBundle& m, const std::vector<Image>& batch,
              const std::function<Var(nn::Binding&, const Mat&)>& run) {
  require(!batch.empty(), "model: empty batch");
  Mat pixels = pack_batch(batch, m.config().image_hw, m.config().in_channels);
  nn::Tape tape;
  nn::Binding bind(tape, const_cast<nn::ParamStore&>(m.params()), false);
  Var out = run(bind, pixels);
  return tape.value(out).transpose();
}
}  // namespace

Mat ModelBundle::embed(const std::vector<Image>& batch) const {
  return eval_pass(*this, batch, [&](nn::Binding& bind, const Mat& px) {
    return forward(bind, px).z;
  });
}

Mat ModelBundle::encode(const std::vector<Image>& batch) const {
  return eval_pass(*this, batch, [&](nn::Binding& bind, const Mat& px) {
    return forward(bind, px).features;
  });
}

Mat ModelBundle::shift_logits(const std::vector<Image>& batch) const {
  return eval_pass(*this, batch, [&](nn::Binding& bind, const Mat& px) {
    return shift_logits_var(bind, forward(bind, px).features);
  });
}

Mat ModelBundle::class_logits(const std::vector<Image>& batch) const {
  return eval_pass(*this, batch, [&](nn::Binding& bind, const Mat& px) {
    return class_logits_var(bind, forward(bind, px).features);
  });
}

Mat ModelBundle::joint_logits(const std::vector<Image>& batch) const {
  return eval_pass(*this, batch, [&](nn::Binding& bind, const Mat& px) {
    return joint_logits_var(bind, forward(bind, px).features);
  });
}

Mat ModelBundle::shift_head_weights() const {
  return store_.param(shift_head_.w).value;
}

void ModelBundle::save_checkpoint(const std::string& path, const json& run_config) const {
  NamedArrays arrays;
  for (const nn::Param& p : store_.params()) arrays.add("param." + p.name, p.value);
  for (const nn::Buffer& b : store_.buffers()) arrays.add("buffer." + b.name, b.value);
  json header = {{"model", config_.to_json()},
                 {"family", family_.to_json()},
                 {"run_config", run_config},
                 {"arrays", arrays.manifest()}};
  write_blob_file(path, "csi.checkpoint", kSchemaVersion, header, arrays.flatten());
}

std::unique_ptr<ModelBundle> ModelBundle::load_checkpoint(const std::string& path,
                                                          json* run_config) {
  BlobFile f = read_blob_file(path, "csi.checkpoint", kSchemaVersion);
  ModelConfig cfg = ModelConfig::from_json(f.header.at("model"));
  ShiftFamily fam = ShiftFamily::from_json(f.header.at("family"));
  auto bundle = std::make_unique<ModelBundle>(cfg, fam, 0);
  NamedArrays arrays = NamedArrays::unflatten(f.header.at("arrays"), f.blob);
  for (nn::Param& p : bundle->store_.params()) {
    const Mat& v = arrays.get("param." + p.name);
    require(v.rows() == p.value.rows() && v.cols() == p.value.cols(),
            "checkpoint: shape mismatch for parameter " + p.name);
    p.value = v;
  }
  for (nn::Buffer& b : bundle->store_.buffers()) {
    const Mat& v = arrays.get("buffer." + b.name);
    require(v.rows() == b.value.rows() && v.cols() == b.value.cols(),
            "checkpoint: shape mismatch for buffer " + b.name);
    b.value = v;
  }
  if (run_config) *run_config = f.header.at("run_config");
  return bundle;
}

Mat pack_batch(const std::vector<Image>& batch, int hw, int channels) {
  require(!batch.empty(), "pack_batch: empty batch");
  Mat out(static_cast<long>(channels) * hw * hw, static_cast<long>(batch.size()));
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const Image& im = batch[b];
    require(im.h == hw && im.w == hw && im.c == channels,
            "pack_batch: image " + std::to_string(b) + " has shape " + std::to_string(im.h) +
                "x" + std::to_string(im.w) + "x" + std::to_string(im.c) + ", expected " +
                std::to_string(hw) + "x" + std::to_string(hw) + "x" + std::to_string(channels));
    for (int ch = 0; ch < channels; ++ch)
      for (int y = 0; y < hw; ++y)
        for (int x = 0; x < hw; ++x)
          out((static_cast<long>(ch) * hw + y) * hw + x, static_cast<long>(b)) = im.at(y, x, ch);
  }
  return out;
}

Image unpack_column(const Mat& m, long col, int hw, int channels) {
  require(m.rows() == static_cast<long>(channels) * hw * hw && col >= 0 && col < m.cols(),
          "unpack_column: shape mismatch");
  Image im(hw, hw, channels);
  for (int ch = 0; ch < channels; ++ch)
    for (int y = 0; y < hw; ++y)
      for (int x = 0; x < hw; ++x)
        im.at(y, x, ch) = m((static_cast<long>(ch) * hw + y) * hw + x, col);
  return im;
}

std::vector<Image> pixels_of(const std::vector<Sample>& samples) {
  std::vector<Image> out;
  out.reserve(samples.size());
  for (const Sample& s : samples) out.push_back(s.pixels);
  return out;
}

}  // namespace csi
