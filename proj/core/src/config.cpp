#include "csi/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>

namespace csi {

namespace {

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    double v = std::stod(value, &used);
    require(used == value.size(), "config: trailing characters in " + key + "=" + value);
    return v;
  } catch (const Error&) {
    throw;
  } catch (const std::exception&) {
    fail("config: expected a number for " + key + ", got '" + value + "'");
  }
}

int parse_int(const std::string& key, const std::string& value) {
  double v = parse_double(key, value);
  int i = static_cast<int>(v);
  require(static_cast<double>(i) == v, "config: expected an integer for " + key);
  return i;
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  require(ec == std::errc() && p == value.data() + value.size(),
          "config: expected an unsigned integer for " + key + ", got '" + value + "'");
  return v;
}

bool parse_bool(const std::string& key, const std::string& value) {
  std::string v = to_lower(value);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  fail("config: expected a boolean for " + key + ", got '" + value + "'");
}

using Setter = std::function<void(RunConfig&, const std::string&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"data.kind", [](RunConfig& c, const std::string& k, const std::string& v) {
         require(v == "scenes" || v == "file", "config: " + k + " must be scenes or file");
         c.data_kind = v;
       }},
      {"data.path", [](RunConfig& c, const std::string&, const std::string& v) { c.data_path = v; }},
      {"data.per_class",
       [](RunConfig& c, const std::string& k, const std::string& v) { c.data_per_class = parse_int(k, v); }},
      {"data.hw", [](RunConfig& c, const std::string& k, const std::string& v) { c.data_hw = parse_int(k, v); }},
      {"data.classes",
       [](RunConfig& c, const std::string& k, const std::string& v) { c.data_classes = parse_int(k, v); }},
      {"data.test_fraction",
       [](RunConfig& c, const std::string& k, const std::string& v) { c.data_test_fraction = parse_double(k, v); }},
      {"data.target_class",
       [](RunConfig& c, const std::string& k, const std::string& v) { c.data_target_class = parse_int(k, v); }},
      {"model.arch", [](RunConfig& c, const std::string& k, const std::string& v) {
         require(v == "small" || v == "resnet18", "config: " + k + " must be small or resnet18");
         c.model_arch = v;
       }},
      {"model.width",
       [](RunConfig& c, const std::string& k, const std::string& v) { c.model_width = parse_int(k, v); }},
      {"model.proj_dim",
       [](RunConfig& c, const std::string& k, const std::string& v) { c.model_proj_dim = parse_int(k, v); }},
      {"shift.spec", [](RunConfig& c, const std::string&, const std::string& v) { c.shift_spec = v; }},
      {"shift.perm_grid",
       [](RunConfig& c, const std::string& k, const std::string& v) { c.shift_params.perm_grid = parse_int(k, v); }},
      {"shift.perm_k",
       [](RunConfig& c, const std::string& k, const std::string& v) { c.shift_params.perm_k = parse_int(k, v); }},
      {"shift.noise_sigma",
       [](RunConfig& c, const std::string& k, const std::string& v) { c.shift_params.noise_sigma = parse_double(k, v); }},
      {"shift.blur_sigma",
       [](RunConfig& c, const std::string& k, const std::string& v) { c.shift_params.blur_sigma = parse_double(k, v); }},
      {"shift.cutout_frac",
       [](RunConfig& c, const std::string& k, const std::string& v) { c.shift_params.cutout_frac = parse_double(k, v); }},
      {"aug.crop_area_lo",
       [](RunConfig& c, const std::string& k, const std::string& v) { c.aug.crop_area_lo = parse_double(k, v); }},
      {"aug.crop_area_hi",
       [](RunConfig& c, const std::string& k, const std::string& v) { c.aug.crop_area_hi = parse_double(k, v); }},
      {"aug.flip_prob",
       [](RunConfig& c, const std::string& k, const std::string& v) { c.aug.flip_prob = parse_double(k, v); }},
      {"aug.jitter_prob",
       [](RunConfig& c, const std::string& k, const std::string& v) { c.aug.jitter_prob = parse_double(k, v); }},
      {"aug.jitter_hue",
       [](RunConfig& c, const std::string& k, const std::string& v) { c.aug.jitter_hue = parse_double(k, v); }},
      {"aug.jitter_sat",
       [](RunConfig& c, const std::string& k, const std::string& v) { c.aug.jitter_sat = parse_double(k, v); }},
      {"aug.jitter_val",
       [](RunConfig& c, const std::string& k, const std::string& v) { c.aug.jitter_val = parse_double(k, v); }},
      {"aug.grayscale_prob",
       [](RunConfig& c, const std::string& k, const std::string& v) { c.aug.grayscale_prob = parse_double(k, v); }},
      {"aug.mode", [](RunConfig& c, const std::string& k, const std::string& v) {
         if (v == "train") c.aug.mode = AugMode::Train;
         else if (v == "controlled") c.aug.mode = AugMode::Controlled;
         else fail("config: " + k + " must be train or controlled");
       }},
      {"loss.mode", [](RunConfig& c, const std::string&, const std::string& v) {
         loss_mode_from_name(v);  // rejects unknown, enumerating valid modes
         c.loss_mode = v;
       }},
      {"loss.temperature",
       [](RunConfig& c, const std::string& k, const std::string& v) { c.loss_temperature = parse_double(k, v); }},
      {"loss.lambda_cls",
       [](RunConfig& c, const std::string& k, const std::string& v) { c.loss_lambda_cls = parse_double(k, v); }},
      {"loss.align_shift_as_positive",
       [](RunConfig& c, const std::string& k, const std::string& v) { c.loss_align_shift_as_positive = parse_bool(k, v); }},
      {"loss.max_views",
       [](RunConfig& c, const std::string& k, const std::string& v) { c.loss_max_views = parse_int(k, v); }},
      {"optim.lr",
       [](RunConfig& c, const std::string& k, const std::string& v) { c.optim.lr = parse_double(k, v); }},
      {"optim.momentum",
       [](RunConfig& c, const std::string& k, const std::string& v) { c.optim.momentum = parse_double(k, v); }},
      {"optim.weight_decay",
       [](RunConfig& c, const std::string& k, const std::string& v) { c.optim.weight_decay = parse_double(k, v); }},
      {"optim.warmup_epochs",
       [](RunConfig& c, const std::string& k, const std::string& v) { c.optim.warmup_epochs = parse_int(k, v); }},
      {"train.epochs",
       [](RunConfig& c, const std::string& k, const std::string& v) { c.train_epochs = parse_int(k, v); }},
      {"train.batch_size",
       [](RunConfig& c, const std::string& k, const std::string& v) { c.train_batch_size = parse_int(k, v); }},
      {"score.mode", [](RunConfig& c, const std::string&, const std::string& v) {
         score_mode_from_name(v);
         c.score_mode = v;
       }},
      {"score.kind", [](RunConfig& c, const std::string&, const std::string& v) {
         score_kind_from_name(v);
         c.score_kind = v;
       }},
      {"score.ensemble_n",
       [](RunConfig& c, const std::string& k, const std::string& v) { c.score_ensemble_n = parse_int(k, v); }},
      {"score.coreset_ratio",
       [](RunConfig& c, const std::string& k, const std::string& v) { c.score_coreset_ratio = parse_double(k, v); }},
      {"score.controlled_policy",
       [](RunConfig& c, const std::string& k, const std::string& v) { c.score_controlled_policy = parse_bool(k, v); }},
      {"score.balanced",
       [](RunConfig& c, const std::string& k, const std::string& v) { c.score_balanced = parse_bool(k, v); }},
      {"seed", [](RunConfig& c, const std::string& k, const std::string& v) { c.seed = parse_u64(k, v); }},
      {"out_dir", [](RunConfig& c, const std::string&, const std::string& v) { c.out_dir = v; }},
  };
  return table;
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  auto it = setters().find(key);
  if (it == setters().end()) {
    std::string known;
    for (const auto& [k, _] : setters()) known += (known.empty() ? "" : ", ") + k;
    fail("config: unknown key '" + key + "' (known: " + known + ")");
  }
  it->second(*this, key, value);
}

void RunConfig::apply_preset(const std::string& name) {
  if (name == "desk") {
    model_arch = "small";
    model_width = 16;
    data_hw = 32;
    train_epochs = 100;
    train_batch_size = 128;
    optim.lr = 0.5;
  } else if (name == "paper") {
    model_arch = "resnet18";
    data_hw = 32;
    train_epochs = 1000;
    train_batch_size = 512;
    optim.lr = 1.0;
    optim.warmup_epochs = 10;
    optim.weight_decay = 1e-6;
    optim.momentum = 0.9;
    loss_temperature = 0.5;
    model_proj_dim = 128;
    shift_spec = "rotate";
  } else {
    fail("config: unknown preset '" + name + "' (valid: desk, paper)");
  }
}

void RunConfig::apply_file(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "config: cannot open " + path);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string s = trim(line);
    if (s.empty() || s[0] == '#') continue;
    auto eq = s.find('=');
    require(eq != std::string::npos,
            "config: " + path + ":" + std::to_string(lineno) + ": expected key=value");
    set(trim(s.substr(0, eq)), trim(s.substr(eq + 1)));
  }
}

RunConfig RunConfig::from_file(const std::string& path) {
  RunConfig c;
  c.apply_file(path);
  return c;
}

void RunConfig::validate() const {
  require(data_per_class >= 2, "config: data.per_class must be >= 2");
  require(data_hw >= 8, "config: data.hw must be >= 8");
  require(data_classes >= 2, "config: data.classes must be >= 2");
  require(data_test_fraction > 0.0 && data_test_fraction < 1.0,
          "config: data.test_fraction must lie in (0,1)");
  require(data_target_class >= 0 && data_target_class < data_classes,
          "config: data.target_class out of range");
  require(data_kind == "scenes" || data_kind == "file",
          "config: data.kind must be scenes or file, got " + data_kind);
  if (data_kind == "file") require(!data_path.empty(), "config: data.path required for data.kind=file");
  require(model_width >= 1 && model_proj_dim >= 2, "config: invalid model dimensions");
  require(train_epochs >= 0, "config: train.epochs must be >= 0");
  require(train_batch_size >= 2, "config: train.batch_size must be >= 2");
  require(score_ensemble_n >= 1, "config: score.ensemble_n must be >= 1");
  require(score_coreset_ratio > 0.0 && score_coreset_ratio <= 1.0,
          "config: score.coreset_ratio must lie in (0,1]");
  aug.validate();
  optim.validate();
  loss_config().validate();
  family().validate();
}

json RunConfig::to_json() const {
  return {{"data.kind", data_kind},
          {"data.path", data_path},
          {"data.per_class", data_per_class},
          {"data.hw", data_hw},
          {"data.classes", data_classes},
          {"data.test_fraction", data_test_fraction},
          {"data.target_class", data_target_class},
          {"model.arch", model_arch},
          {"model.width", model_width},
          {"model.proj_dim", model_proj_dim},
          {"shift.spec", shift_spec},
          {"shift.perm_grid", shift_params.perm_grid},
          {"shift.perm_k", shift_params.perm_k},
          {"shift.noise_sigma", shift_params.noise_sigma},
          {"shift.blur_sigma", shift_params.blur_sigma},
          {"shift.cutout_frac", shift_params.cutout_frac},
          {"aug.crop_area_lo", aug.crop_area_lo},
          {"aug.crop_area_hi", aug.crop_area_hi},
          {"aug.flip_prob", aug.flip_prob},
          {"aug.jitter_prob", aug.jitter_prob},
          {"aug.jitter_hue", aug.jitter_hue},
          {"aug.jitter_sat", aug.jitter_sat},
          {"aug.jitter_val", aug.jitter_val},
          {"aug.grayscale_prob", aug.grayscale_prob},
          {"aug.mode", aug.mode == AugMode::Train ? "train" : "controlled"},
          {"loss.mode", loss_mode},
          {"loss.temperature", loss_temperature},
          {"loss.lambda_cls", loss_lambda_cls},
          {"loss.align_shift_as_positive", loss_align_shift_as_positive},
          {"loss.max_views", loss_max_views},
          {"optim.lr", optim.lr},
          {"optim.momentum", optim.momentum},
          {"optim.weight_decay", optim.weight_decay},
          {"optim.warmup_epochs", optim.warmup_epochs},
          {"train.epochs", train_epochs},
          {"train.batch_size", train_batch_size},
          {"score.mode", score_mode},
          {"score.kind", score_kind},
          {"score.ensemble_n", score_ensemble_n},
          {"score.coreset_ratio", score_coreset_ratio},
          {"score.controlled_policy", score_controlled_policy},
          {"score.balanced", score_balanced},
          {"seed", seed},
          {"out_dir", out_dir}};
}

ShiftFamily RunConfig::family() const {
  return make_shift_family_spec(shift_spec, shift_params, derive_seed(seed, 0x73686966ULL));
}

LossConfig RunConfig::loss_config() const {
  LossConfig lc;
  lc.temperature = loss_temperature;
  lc.lambda_cls = loss_lambda_cls;
  lc.mode = loss_mode_from_name(loss_mode);
  lc.align_shift_as_positive = loss_align_shift_as_positive;
  lc.max_views = loss_max_views;
  return lc;
}

TrainConfig RunConfig::train_config() const {
  TrainConfig tc;
  tc.loss = loss_config();
  tc.policy = aug;
  tc.optim = optim;
  tc.epochs = train_epochs;
  tc.batch_size = train_batch_size;
  tc.seed = seed;
  return tc;
}

ModelConfig RunConfig::model_config(int num_shifts, int num_classes) const {
  ModelConfig mc;
  mc.arch = model_arch;
  mc.image_hw = data_hw;
  mc.in_channels = 3;
  mc.width = model_width;
  mc.proj_dim = model_proj_dim;
  mc.num_shifts = num_shifts;
  mc.num_classes = num_classes;
  mc.with_class_head = num_classes >= 2;
  mc.with_joint_head = num_classes >= 2;
  return mc;
}

ScoringConfig RunConfig::scoring_config() const {
  ScoringConfig sc;
  sc.score_mode = score_mode_from_name(score_mode);
  sc.ensemble_n = score_ensemble_n;
  sc.controlled_policy = score_controlled_policy;
  sc.balanced = score_balanced;
  sc.coreset_ratio = score_coreset_ratio;
  sc.seed = derive_seed(seed, 0x73636f72ULL);
  sc.policy = aug;
  return sc;
}

LabeledDataset RunConfig::load_labeled() const {
  if (data_kind == "scenes")
    return make_scene_dataset(data_per_class, data_hw, data_test_fraction,
                              derive_seed(seed, 0x64617461ULL), data_classes);
  return load_dataset(data_path);
}

DatasetSplit RunConfig::load_split() const {
  LabeledDataset ds = load_labeled();
  require(data_target_class < ds.num_classes(), "config: data.target_class out of range");
  return one_class_split(ds, data_target_class);
}

const std::vector<std::string>& RunConfig::known_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> out;
    for (const auto& [k, _] : setters()) out.push_back(k);
    return out;
  }();
  return keys;
}

}  // namespace csi
