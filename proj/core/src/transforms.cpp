#include "csi/transforms.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace csi {

void AugmentationPolicy::validate() const {
  require(crop_area_lo > 0.0 && crop_area_lo <= crop_area_hi && crop_area_hi <= 1.0,
          "augmentation policy: crop area range must satisfy 0 < lo <= hi <= 1");
  auto prob_ok = [](double p) { return p >= 0.0 && p <= 1.0; };
  require(prob_ok(flip_prob) && prob_ok(jitter_prob) && prob_ok(grayscale_prob),
          "augmentation policy: probabilities must lie in [0,1]");
  require(jitter_hue >= 0.0 && jitter_sat >= 0.0 && jitter_val >= 0.0 && jitter_sat < 1.0 &&
              jitter_val < 1.0,
          "augmentation policy: jitter strengths must be non-negative (factors < 1)");
}

AugmentationPolicy AugmentationPolicy::identity() {
  AugmentationPolicy p;
  p.crop_area_lo = p.crop_area_hi = 1.0;
  p.flip_prob = 0.0;
  p.jitter_prob = 0.0;
  p.grayscale_prob = 0.0;
  return p;
}

json AugmentationPolicy::to_json() const {
  return {{"crop_area_lo", crop_area_lo}, {"crop_area_hi", crop_area_hi},
          {"flip_prob", flip_prob},       {"jitter_prob", jitter_prob},
          {"jitter_hue", jitter_hue},     {"jitter_sat", jitter_sat},
          {"jitter_val", jitter_val},     {"grayscale_prob", grayscale_prob},
          {"mode", mode == AugMode::Train ? "train" : "controlled"}};
}

AugmentationPolicy AugmentationPolicy::from_json(const json& j) {
  AugmentationPolicy p;
  p.crop_area_lo = j.at("crop_area_lo").get<double>();
  p.crop_area_hi = j.at("crop_area_hi").get<double>();
  p.flip_prob = j.at("flip_prob").get<double>();
  p.jitter_prob = j.at("jitter_prob").get<double>();
  p.jitter_hue = j.at("jitter_hue").get<double>();
  p.jitter_sat = j.at("jitter_sat").get<double>();
  p.jitter_val = j.at("jitter_val").get<double>();
  p.grayscale_prob = j.at("grayscale_prob").get<double>();
  std::string m = j.at("mode").get<std::string>();
  require(m == "train" || m == "controlled", "augmentation policy: unknown mode " + m);
  p.mode = m == "train" ? AugMode::Train : AugMode::Controlled;
  p.validate();
  return p;
}

ConcreteAugmentation sample_augmentation(const AugmentationPolicy& policy, Rng& rng) {
  policy.validate();
  ConcreteAugmentation t;
  if (policy.mode == AugMode::Controlled) {
    t.crop_area = 0.5 * (policy.crop_area_lo + policy.crop_area_hi);
    t.crop_cy = t.crop_cx = 0.5;
    t.flip = policy.flip_prob > 0.5;
    t.jitter = policy.jitter_prob > 0.5;
    t.hue_delta = 0.0;
    t.sat_factor = 1.0;
    t.val_factor = 1.0;
    t.grayscale = policy.grayscale_prob > 0.5;
    return t;
  }
  t.crop_area = rng.uniform(policy.crop_area_lo, policy.crop_area_hi);
  t.crop_cy = rng.uniform();
  t.crop_cx = rng.uniform();
  t.flip = rng.uniform() < policy.flip_prob;
  t.jitter = rng.uniform() < policy.jitter_prob;
  if (t.jitter) {
    t.hue_delta = rng.uniform(-policy.jitter_hue, policy.jitter_hue);
    t.sat_factor = rng.uniform(1.0 - policy.jitter_sat, 1.0 + policy.jitter_sat);
    t.val_factor = rng.uniform(1.0 - policy.jitter_val, 1.0 + policy.jitter_val);
  }
  t.grayscale = rng.uniform() < policy.grayscale_prob;
  return t;
}

Image ConcreteAugmentation::apply(const Image& x) const {
  Image out = x;
  if (crop_area < 1.0) {
    int base = std::min(x.h, x.w);
    int side = std::max(1, static_cast<int>(std::lround(std::sqrt(crop_area) * base)));
    side = std::min(side, base);
    int y0 = static_cast<int>(std::lround(crop_cy * (x.h - side)));
    int x0 = static_cast<int>(std::lround(crop_cx * (x.w - side)));
    out = resize(crop(out, y0, x0, side, side), x.h, x.w, ResizeKernel::Bilinear);
  }
  if (flip) out = hflip(out);
  if (jitter && (hue_delta != 0.0 || sat_factor != 1.0 || val_factor != 1.0) && out.c == 3) {
    for (int y = 0; y < out.h; ++y)
      for (int px = 0; px < out.w; ++px) {
        double h, s, v;
        rgb_to_hsv(out.at(y, px, 0), out.at(y, px, 1), out.at(y, px, 2), h, s, v);
        h += hue_delta;
        s = clamp01(s * sat_factor);
        v = clamp01(v * val_factor);
        double r, g, b;
        hsv_to_rgb(h, s, v, r, g, b);
        out.at(y, px, 0) = r;
        out.at(y, px, 1) = g;
        out.at(y, px, 2) = b;
      }
  }
  if (grayscale) out = to_grayscale(out);
  clamp01_inplace(out);
  return out;
}

json ShiftStep::to_json() const {
  json j = {{"kind", kind}};
  if (kind == "rot") j["turns"] = turns;
  if (kind == "perm") {
    j["grid"] = grid;
    j["perm"] = perm;
  }
  if (kind == "noise") {
    j["sigma"] = sigma;
    j["seed"] = seed;
  }
  if (kind == "blur") j["sigma"] = sigma;
  if (kind == "cutout") {
    j["frac"] = frac;
    j["seed"] = seed;
  }
  return j;
}

ShiftStep ShiftStep::from_json(const json& j) {
  ShiftStep s;
  s.kind = j.at("kind").get<std::string>();
  if (s.kind == "rot") s.turns = j.at("turns").get<int>();
  if (s.kind == "perm") {
    s.grid = j.at("grid").get<int>();
    s.perm = j.at("perm").get<std::vector<int>>();
  }
  if (s.kind == "noise" || s.kind == "blur") s.sigma = j.at("sigma").get<double>();
  if (s.kind == "noise" || s.kind == "cutout") s.seed = j.at("seed").get<std::uint64_t>();
  if (s.kind == "cutout") s.frac = j.at("frac").get<double>();
  return s;
}

void ShiftFamily::validate() const {
  require(k() >= 1, "shift family: K must be >= 1");
  require(members[0].empty(), "shift family: member 0 must be the identity");
  require(member_names.size() == members.size(), "shift family: name/member count mismatch");
  for (std::size_t i = 0; i < member_names.size(); ++i)
    for (std::size_t j = i + 1; j < member_names.size(); ++j)
      require(member_names[i] != member_names[j],
              "shift family: duplicate member name " + member_names[i]);
}

json ShiftFamily::to_json() const {
  json ms = json::array();
  for (const auto& steps : members) {
    json seq = json::array();
    for (const ShiftStep& s : steps) seq.push_back(s.to_json());
    ms.push_back(seq);
  }
  return {{"name", name}, {"member_names", member_names}, {"members", ms}};
}

ShiftFamily ShiftFamily::from_json(const json& j) {
  ShiftFamily f;
  f.name = j.at("name").get<std::string>();
  f.member_names = j.at("member_names").get<std::vector<std::string>>();
  for (const json& seq : j.at("members")) {
    std::vector<ShiftStep> steps;
    for (const json& s : seq) steps.push_back(ShiftStep::from_json(s));
    f.members.push_back(std::move(steps));
  }
  f.validate();
  return f;
}

namespace {

Image apply_perm(const Image& x, int grid, const std::vector<int>& perm) {
  require(x.h % grid == 0 && x.w % grid == 0,
          "perm shift: image extent not divisible by grid " + std::to_string(grid));
  require(static_cast<int>(perm.size()) == grid * grid, "perm shift: permutation size mismatch");
  int bh = x.h / grid, bw = x.w / grid;
  Image out(x.h, x.w, x.c);
  for (int t = 0; t < grid * grid; ++t) {
    int s = perm[static_cast<std::size_t>(t)];
    int ty = (t / grid) * bh, tx = (t % grid) * bw;
    int sy = (s / grid) * bh, sx = (s % grid) * bw;
    for (int y = 0; y < bh; ++y)
      for (int xx = 0; xx < bw; ++xx)
        for (int ch = 0; ch < x.c; ++ch)
          out.at(ty + y, tx + xx, ch) = x.at(sy + y, sx + xx, ch);
  }
  return out;
}

Image apply_noise(const Image& x, double sigma, std::uint64_t seed) {
  Rng rng(mix64(seed ^ content_hash(x)));
  Image out = x;
  for (double& v : out.data) v = clamp01(v + sigma * rng.normal());
  return out;
}

Image apply_blur(const Image& x, double sigma) {
  int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> kern(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    double v = std::exp(-0.5 * (i * i) / (sigma * sigma));
    kern[static_cast<std::size_t>(i + radius)] = v;
    sum += v;
  }
  for (double& v : kern) v /= sum;
  auto clampi = [](int v, int n) { return v < 0 ? 0 : (v >= n ? n - 1 : v); };
  Image mid(x.h, x.w, x.c);
  for (int y = 0; y < x.h; ++y)
    for (int px = 0; px < x.w; ++px)
      for (int ch = 0; ch < x.c; ++ch) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i)
          acc += kern[static_cast<std::size_t>(i + radius)] * x.at(y, clampi(px + i, x.w), ch);
        mid.at(y, px, ch) = acc;
      }
  Image out(x.h, x.w, x.c);
  for (int y = 0; y < x.h; ++y)
    for (int px = 0; px < x.w; ++px)
      for (int ch = 0; ch < x.c; ++ch) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i)
          acc += kern[static_cast<std::size_t>(i + radius)] * mid.at(clampi(y + i, x.h), px, ch);
        out.at(y, px, ch) = acc;
      }
  return out;
}

Image apply_cutout(const Image& x, double frac, std::uint64_t seed) {
  Rng rng(mix64(seed ^ content_hash(x)));
  int side = std::max(1, static_cast<int>(std::lround(frac * std::min(x.h, x.w))));
  int y0 = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(x.h - side + 1)));
  int x0 = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(x.w - side + 1)));
  Image out = x;
  for (int y = y0; y < y0 + side; ++y)
    for (int px = x0; px < x0 + side; ++px)
      for (int ch = 0; ch < x.c; ++ch) out.at(y, px, ch) = 0.0;
  return out;
}

Image apply_sobel(const Image& x) {
  static const double gx[3][3] = {{-1, 0, 1}, {-2, 0, 2}, {-1, 0, 1}};
  static const double gy[3][3] = {{-1, -2, -1}, {0, 0, 0}, {1, 2, 1}};
  auto clampi = [](int v, int n) { return v < 0 ? 0 : (v >= n ? n - 1 : v); };
  const double scale = 1.0 / (4.0 * std::sqrt(2.0));
  Image out(x.h, x.w, x.c);
  for (int y = 0; y < x.h; ++y)
    for (int px = 0; px < x.w; ++px)
      for (int ch = 0; ch < x.c; ++ch) {
        double ax = 0.0, ay = 0.0;
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            double v = x.at(clampi(y + dy, x.h), clampi(px + dx, x.w), ch);
            ax += gx[dy + 1][dx + 1] * v;
            ay += gy[dy + 1][dx + 1] * v;
          }
        out.at(y, px, ch) = clamp01(std::sqrt(ax * ax + ay * ay) * scale);
      }
  return out;
}

Image apply_step(const Image& x, const ShiftStep& s) {
  if (s.kind == "rot") return rot90(x, s.turns);
  if (s.kind == "perm") return apply_perm(x, s.grid, s.perm);
  if (s.kind == "noise") return apply_noise(x, s.sigma, s.seed);
  if (s.kind == "blur") return apply_blur(x, s.sigma);
  if (s.kind == "cutout") return apply_cutout(x, s.frac, s.seed);
  if (s.kind == "sobel") return apply_sobel(x);
  fail("unknown shift step kind: " + s.kind);
}

}  // namespace

Image apply_shift(const Image& x, const ShiftFamily& family, int k) {
  require(k >= 0 && k < family.k(),
          "apply_shift: index " + std::to_string(k) + " out of range [0," +
              std::to_string(family.k()) + ")");
  if (family.members[static_cast<std::size_t>(k)].empty()) return x;
  Image out = x;
  for (const ShiftStep& s : family.members[static_cast<std::size_t>(k)]) out = apply_step(out, s);
  return out;
}

ShiftFamily make_shift_family(const std::string& name, const ShiftFamilyParams& params,
                              std::uint64_t seed) {
  ShiftFamily f;
  f.name = name;
  f.members.push_back({});
  f.member_names.push_back("id");
  if (name == "identity") {
    // K = 1
  } else if (name == "rotate") {
    for (int t = 1; t < 4; ++t) {
      ShiftStep s;
      s.kind = "rot";
      s.turns = t;
      f.members.push_back({s});
      f.member_names.push_back("rot" + std::to_string(90 * t));
    }
  } else if (name == "perm") {
    int g = params.perm_grid;
    require(g >= 2, "perm family: grid must be >= 2");
    int cells = g * g;
    long total = 1;
    for (int i = 2; i <= cells && total < 100000; ++i) total *= i;
    int want = std::min<long>(params.perm_k, total);
    require(want >= 1, "perm family: K must be >= 1");
    // enumerate candidate permutations by seeded shuffles, identity first
    std::vector<std::vector<int>> chosen;
    std::vector<int> ident(static_cast<std::size_t>(cells));
    std::iota(ident.begin(), ident.end(), 0);
    chosen.push_back(ident);
    Rng rng(derive_seed(seed, 0x7065726dULL));
    int guard = 0;
    while (static_cast<int>(chosen.size()) < want) {
      std::vector<int> p = ident;
      rng.shuffle(p);
      if (std::find(chosen.begin(), chosen.end(), p) == chosen.end()) chosen.push_back(p);
      require(++guard < 100000, "perm family: unable to draw enough distinct permutations");
    }
    for (std::size_t i = 1; i < chosen.size(); ++i) {
      ShiftStep s;
      s.kind = "perm";
      s.grid = g;
      s.perm = chosen[i];
      f.members.push_back({s});
      f.member_names.push_back("perm" + std::to_string(i));
    }
  } else if (name == "noise") {
    ShiftStep s;
    s.kind = "noise";
    s.sigma = params.noise_sigma;
    s.seed = derive_seed(seed, 0x6e6f6973ULL);
    f.members.push_back({s});
    f.member_names.push_back("noise");
  } else if (name == "blur") {
    ShiftStep s;
    s.kind = "blur";
    s.sigma = params.blur_sigma;
    f.members.push_back({s});
    f.member_names.push_back("blur");
  } else if (name == "cutout") {
    ShiftStep s;
    s.kind = "cutout";
    s.frac = params.cutout_frac;
    s.seed = derive_seed(seed, 0x6375746fULL);
    f.members.push_back({s});
    f.member_names.push_back("cutout");
  } else if (name == "sobel") {
    ShiftStep s;
    s.kind = "sobel";
    f.members.push_back({s});
    f.member_names.push_back("sobel");
  } else {
    fail("unknown shift family: " + name +
         " (valid: identity, rotate, perm, noise, blur, cutout, sobel)");
  }
  f.validate();
  return f;
}

ShiftFamily compose_shift_families(const ShiftFamily& a, const ShiftFamily& b, int cap) {
  a.validate();
  b.validate();
  long product = static_cast<long>(a.k()) * b.k();
  require(product <= cap, "compose_shift_families: product size " + std::to_string(product) +
                              " exceeds cap " + std::to_string(cap));
  ShiftFamily f;
  f.name = a.name + "*" + b.name;
  for (int i = 0; i < a.k(); ++i)
    for (int j = 0; j < b.k(); ++j) {
      std::vector<ShiftStep> steps = b.members[static_cast<std::size_t>(j)];
      const auto& asteps = a.members[static_cast<std::size_t>(i)];
      steps.insert(steps.end(), asteps.begin(), asteps.end());
      f.members.push_back(std::move(steps));
      if (i == 0 && j == 0)
        f.member_names.push_back("id");
      else
        f.member_names.push_back(a.member_names[static_cast<std::size_t>(i)] + "*" +
                                 b.member_names[static_cast<std::size_t>(j)]);
    }
  f.validate();
  return f;
}

ShiftFamily make_shift_family_spec(const std::string& spec, const ShiftFamilyParams& params,
                                   std::uint64_t seed, int cap) {
  std::vector<std::string> parts = split(spec, '*');
  require(!parts.empty() && !parts[0].empty(), "shift family spec must not be empty");
  ShiftFamily f = make_shift_family(trim(parts[0]), params, seed);
  for (std::size_t i = 1; i < parts.size(); ++i)
    f = compose_shift_families(f, make_shift_family(trim(parts[i]), params, derive_seed(seed, i)),
                               cap);
  return f;
}

}  // namespace csi
