#include "csi/data.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace csi {

void validate_sample(const Sample& s) {
  require(s.pixels.h >= 2 && s.pixels.w >= 2, "sample: height and width must be >= 2");
  require(s.pixels.c == 1 || s.pixels.c == 3, "sample: channels must be 1 or 3");
  for (double v : s.pixels.data)
    require(v >= 0.0 && v <= 1.0, "sample: pixel value outside [0,1]");
}

namespace {
std::string class_list_string(const std::set<int>& classes) {
  std::string s;
  for (int c : classes) {
    if (!s.empty()) s += ", ";
    s += std::to_string(c);
  }
  return s;
}
}  // namespace

DatasetSplit one_class_split(const std::vector<Sample>& dataset, int target_class,
                             double test_fraction, std::uint64_t seed) {
  require(!dataset.empty(), "one_class_split: empty dataset");
  require(test_fraction > 0.0 && test_fraction < 1.0,
          "one_class_split: test fraction must lie in (0,1)");
  std::set<int> classes;
  for (const Sample& s : dataset) {
    require(s.label >= 0, "one_class_split: all samples must carry labels");
    classes.insert(s.label);
  }
  require(classes.count(target_class) == 1,
          "one_class_split: unknown class " + std::to_string(target_class) +
              " (valid: " + class_list_string(classes) + ")");

  DatasetSplit out;
  out.ood_test["rest"] = {};
  for (int cls : classes) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < dataset.size(); ++i)
      if (dataset[i].label == cls) idx.push_back(i);
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(cls)));
    rng.shuffle(idx);
    std::size_t n_test = static_cast<std::size_t>(
        std::llround(test_fraction * static_cast<double>(idx.size())));
    n_test = std::min(n_test, idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const Sample& s = dataset[idx[i]];
      bool is_test = i >= idx.size() - n_test;
      if (cls == target_class) {
        (is_test ? out.in_test : out.in_train).push_back(s);
      } else if (is_test) {
        out.ood_test["rest"].push_back(s);
      }
    }
  }
  return out;
}

DatasetSplit one_class_split(const LabeledDataset& dataset, int target_class) {
  std::set<int> classes;
  for (const Sample& s : dataset.train) classes.insert(s.label);
  for (const Sample& s : dataset.test) classes.insert(s.label);
  require(classes.count(target_class) == 1,
          "one_class_split: unknown class " + std::to_string(target_class) +
              " (valid: " + class_list_string(classes) + ")");
  DatasetSplit out;
  out.ood_test["rest"] = {};
  for (const Sample& s : dataset.train)
    if (s.label == target_class) out.in_train.push_back(s);
  for (const Sample& s : dataset.test) {
    if (s.label == target_class)
      out.in_test.push_back(s);
    else
      out.ood_test["rest"].push_back(s);
  }
  return out;
}

std::vector<Sample> interp_generator(const std::vector<Sample>& test_set, int count,
                                     std::uint64_t rng_seed) {
  require(test_set.size() >= 2, "interp_generator: need at least two samples");
  require(count > 0, "interp_generator: count must be positive");
  Rng rng(rng_seed);
  std::vector<Sample> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    std::size_t a = rng.uniform_index(test_set.size());
    std::size_t b = rng.uniform_index(test_set.size() - 1);
    if (b >= a) ++b;  // distinct pair
    const Image& pa = test_set[a].pixels;
    const Image& pb = test_set[b].pixels;
    require(pa.same_shape(pb), "interp_generator: samples must share one shape");
    Sample s;
    s.pixels = pa;
    for (std::size_t j = 0; j < s.pixels.data.size(); ++j)
      s.pixels.data[j] = 0.5 * (pa.data[j] + pb.data[j]);
    s.id = "interp-" + std::to_string(i) + "-" + std::to_string(a) + "-" + std::to_string(b);
    out.push_back(std::move(s));
  }
  return out;
}

LabeledDataset partition_dataset(const std::vector<Sample>& samples,
                                 const std::vector<std::string>& class_names,
                                 double test_fraction, std::uint64_t seed) {
  require(test_fraction > 0.0 && test_fraction < 1.0,
          "partition_dataset: test fraction must lie in (0,1)");
  LabeledDataset ds;
  ds.class_names = class_names;
  int C = static_cast<int>(class_names.size());
  for (int cls = 0; cls < C; ++cls) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < samples.size(); ++i)
      if (samples[i].label == cls) idx.push_back(i);
    require(!idx.empty(), "partition_dataset: class " + class_names[static_cast<std::size_t>(cls)] +
                              " has no samples");
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(cls)));
    rng.shuffle(idx);
    std::size_t n_test = static_cast<std::size_t>(
        std::llround(test_fraction * static_cast<double>(idx.size())));
    n_test = std::min(n_test, idx.size() - 1);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      if (i >= idx.size() - n_test)
        ds.test.push_back(samples[idx[i]]);
      else
        ds.train.push_back(samples[idx[i]]);
    }
  }
  return ds;
}

namespace {

struct Rgb {
  double r, g, b;
};

Rgb jitter_color(Rgb c, double amt, Rng& rng) {
  return {clamp01(c.r + rng.uniform(-amt, amt)), clamp01(c.g + rng.uniform(-amt, amt)),
          clamp01(c.b + rng.uniform(-amt, amt))};
}

struct ScenePalette {
  Rgb sky_top, sky_horizon, ground;
  double stripe_amp, stripe_freq;
  double sun_prob, sun_r_lo, sun_r_hi;
  Rgb sun;
  bool stars;
};

// Classes share layout (sky above, textured ground below a horizon) and
// differ in palette/texture, so they overlap enough to make one-class
// detection non-trivial while the vertical cue stays strong.
const ScenePalette kScenes[4] = {
    // meadow
    {{0.45, 0.62, 0.92}, {0.74, 0.84, 0.93}, {0.22, 0.52, 0.20}, 0.07, 3.0, 0.9, 0.05, 0.09,
     {1.0, 0.95, 0.70}, false},
    // dunes
    {{0.52, 0.70, 0.93}, {0.88, 0.83, 0.68}, {0.78, 0.63, 0.36}, 0.09, 2.0, 0.7, 0.05, 0.08,
     {1.0, 0.98, 0.85}, false},
    // night
    {{0.03, 0.04, 0.12}, {0.10, 0.12, 0.24}, {0.06, 0.09, 0.07}, 0.04, 2.5, 0.8, 0.04, 0.07,
     {0.93, 0.93, 0.88}, true},
    // sea
    {{0.48, 0.68, 0.90}, {0.80, 0.87, 0.94}, {0.12, 0.36, 0.58}, 0.10, 5.0, 0.5, 0.05, 0.08,
     {1.0, 0.92, 0.70}, false},
};

Image render_scene(int cls, int hw, Rng& rng) {
  const ScenePalette& pal = kScenes[cls];
  Image im(hw, hw, 3);
  double horizon = rng.uniform(0.45, 0.65);
  int hy = static_cast<int>(horizon * hw);
  Rgb sky_top = jitter_color(pal.sky_top, 0.06, rng);
  Rgb sky_h = jitter_color(pal.sky_horizon, 0.06, rng);
  Rgb ground = jitter_color(pal.ground, 0.08, rng);
  double phase = rng.uniform(0.0, 6.283185307179586);
  double freq = pal.stripe_freq * rng.uniform(0.8, 1.25);

  for (int y = 0; y < hw; ++y) {
    if (y < hy) {
      double t = static_cast<double>(y) / std::max(1, hy - 1);
      for (int x = 0; x < hw; ++x) {
        im.at(y, x, 0) = sky_top.r + t * (sky_h.r - sky_top.r);
        im.at(y, x, 1) = sky_top.g + t * (sky_h.g - sky_top.g);
        im.at(y, x, 2) = sky_top.b + t * (sky_h.b - sky_top.b);
      }
    } else {
      double depth = static_cast<double>(y - hy) / std::max(1, hw - hy);
      double stripe = pal.stripe_amp * std::sin(phase + freq * 6.283185307179586 * depth);
      double shade = 1.0 - 0.25 * depth;
      for (int x = 0; x < hw; ++x) {
        im.at(y, x, 0) = clamp01(ground.r * shade + stripe);
        im.at(y, x, 1) = clamp01(ground.g * shade + stripe);
        im.at(y, x, 2) = clamp01(ground.b * shade + stripe);
      }
    }
  }

  if (rng.uniform() < pal.sun_prob) {
    double r = rng.uniform(pal.sun_r_lo, pal.sun_r_hi) * hw;
    double sy = rng.uniform(0.08, 0.8) * hy;
    double sx = rng.uniform(0.1, 0.9) * hw;
    for (int y = 0; y < hy; ++y)
      for (int x = 0; x < hw; ++x) {
        double d2 = ((y - sy) * (y - sy) + (x - sx) * (x - sx)) / (r * r);
        if (d2 < 4.0) {
          double a = std::exp(-d2);
          im.at(y, x, 0) = clamp01(im.at(y, x, 0) * (1 - a) + pal.sun.r * a);
          im.at(y, x, 1) = clamp01(im.at(y, x, 1) * (1 - a) + pal.sun.g * a);
          im.at(y, x, 2) = clamp01(im.at(y, x, 2) * (1 - a) + pal.sun.b * a);
        }
      }
  }

  if (pal.stars) {
    int n = rng.uniform_int(12, 30);
    for (int i = 0; i < n; ++i) {
      int y = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(std::max(1, hy))));
      int x = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(hw)));
      double b = rng.uniform(0.5, 1.0);
      for (int ch = 0; ch < 3; ++ch) im.at(y, x, ch) = clamp01(im.at(y, x, ch) + b);
    }
  }

  for (double& v : im.data) v = clamp01(v + 0.015 * rng.normal());
  return im;
}

}  // namespace

LabeledDataset make_scene_dataset(int per_class, int hw, double test_fraction,
                                  std::uint64_t seed, int num_classes) {
  require(per_class >= 2, "scene dataset: need at least 2 samples per class");
  require(hw >= 8, "scene dataset: extent must be >= 8");
  require(num_classes >= 1 && num_classes <= 4, "scene dataset: 1..4 classes available");
  static const char* kNames[4] = {"meadow", "dunes", "night", "sea"};
  std::vector<Sample> samples;
  for (int cls = 0; cls < num_classes; ++cls) {
    Rng rng(derive_seed(seed, 0x5363656eULL + static_cast<std::uint64_t>(cls)));
    for (int i = 0; i < per_class; ++i) {
      Sample s;
      s.pixels = render_scene(cls, hw, rng);
      s.label = cls;
      s.id = std::string(kNames[cls]) + "-" + std::to_string(i);
      samples.push_back(std::move(s));
    }
  }
  std::vector<std::string> names(kNames, kNames + num_classes);
  return partition_dataset(samples, names, test_fraction, derive_seed(seed, 0x73706c69ULL));
}

std::vector<Image> make_smooth_corpus(int count, int hw, std::uint64_t seed) {
  require(count > 0 && hw >= 16, "smooth corpus: count > 0 and extent >= 16 required");
  std::vector<Image> out;
  out.reserve(static_cast<std::size_t>(count));
  Rng rng(seed);
  for (int i = 0; i < count; ++i) {
    Image im(hw, hw, 3);
    double base[3] = {rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8)};
    for (int y = 0; y < hw; ++y)
      for (int x = 0; x < hw; ++x)
        for (int ch = 0; ch < 3; ++ch) im.at(y, x, ch) = base[ch];
    int blobs = rng.uniform_int(3, 6);
    for (int b = 0; b < blobs; ++b) {
      double cy = rng.uniform(0.0, hw), cx = rng.uniform(0.0, hw);
      double sg = rng.uniform(0.15, 0.40) * hw;
      double amp[3] = {rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5)};
      for (int y = 0; y < hw; ++y)
        for (int x = 0; x < hw; ++x) {
          double a = std::exp(-0.5 * ((y - cy) * (y - cy) + (x - cx) * (x - cx)) / (sg * sg));
          for (int ch = 0; ch < 3; ++ch)
            im.at(y, x, ch) += amp[ch] * a;
        }
    }
    clamp01_inplace(im);
    out.push_back(std::move(im));
  }
  return out;
}

void save_dataset(const std::string& path, const LabeledDataset& ds) {
  json samples = json::array();
  std::vector<double> blob;
  auto emit = [&](const Sample& s, const char* split) {
    samples.push_back({{"id", s.id},
                       {"label", s.label},
                       {"split", split},
                       {"h", s.pixels.h},
                       {"w", s.pixels.w},
                       {"c", s.pixels.c}});
    blob.insert(blob.end(), s.pixels.data.begin(), s.pixels.data.end());
  };
  for (const Sample& s : ds.train) emit(s, "train");
  for (const Sample& s : ds.test) emit(s, "test");
  json header = {{"classes", ds.class_names}, {"samples", samples}};
  write_blob_file(path, "csi.dataset", kSchemaVersion, header, blob);
}

LabeledDataset load_dataset(const std::string& path) {
  BlobFile f = read_blob_file(path, "csi.dataset", kSchemaVersion);
  LabeledDataset ds;
  ds.class_names = f.header.at("classes").get<std::vector<std::string>>();
  std::size_t offset = 0;
  for (const json& rec : f.header.at("samples")) {
    Sample s;
    s.id = rec.at("id").get<std::string>();
    s.label = rec.at("label").get<int>();
    s.pixels = Image(rec.at("h").get<int>(), rec.at("w").get<int>(), rec.at("c").get<int>());
    require(offset + s.pixels.size() <= f.blob.size(), "dataset file: truncated pixel blob");
    std::copy(f.blob.begin() + static_cast<long>(offset),
              f.blob.begin() + static_cast<long>(offset + s.pixels.size()),
              s.pixels.data.begin());
    offset += s.pixels.size();
    std::string split = rec.at("split").get<std::string>();
    (split == "train" ? ds.train : ds.test).push_back(std::move(s));
  }
  require(offset == f.blob.size(), "dataset file: pixel blob longer than manifest");
  return ds;
}

}  // namespace csi
