#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "csi/transforms.hpp"

namespace {

csi::Image noisy_image(int hw, std::uint64_t seed) {
  csi::Image im(hw, hw, 3);
  csi::Rng rng(seed);
  for (double& v : im.data) v = rng.uniform();
  return im;
}

std::vector<double> sorted_pixels(const csi::Image& im) {
  std::vector<double> v = im.data;
  std::sort(v.begin(), v.end());
  return v;
}

}  // namespace

TEST_CASE("controlled draws are fixed and leave the rng untouched") {
  csi::AugmentationPolicy p;
  p.mode = csi::AugMode::Controlled;
  csi::Rng rng(5);
  csi::Rng witness(5);
  csi::ConcreteAugmentation a = csi::sample_augmentation(p, rng);
  csi::ConcreteAugmentation b = csi::sample_augmentation(p, rng);
  CHECK(rng.uniform() == witness.uniform());
  CHECK(a.crop_area == 0.5 * (p.crop_area_lo + p.crop_area_hi));
  CHECK(a.crop_area == b.crop_area);
  CHECK(a.flip == b.flip);
  CHECK_FALSE(a.flip);     // 0.5 is not a majority
  CHECK(a.jitter);         // 0.8 is
  CHECK(a.hue_delta == 0.0);
  CHECK(a.sat_factor == 1.0);
  CHECK_FALSE(a.grayscale);
}

TEST_CASE("train draws respect the configured ranges and rates") {
  csi::AugmentationPolicy p;
  p.crop_area_lo = 0.3;
  p.crop_area_hi = 0.9;
  p.flip_prob = 0.25;
  csi::Rng rng(17);
  int flips = 0;
  const int n = 4000;
  for (int i = 0; i < n; ++i) {
    csi::ConcreteAugmentation t = csi::sample_augmentation(p, rng);
    CHECK(t.crop_area >= 0.3);
    CHECK(t.crop_area < 0.9);
    if (t.flip) ++flips;
    if (t.jitter) {
      CHECK(std::abs(t.hue_delta) <= p.jitter_hue);
      CHECK(t.sat_factor >= 1.0 - p.jitter_sat);
      CHECK(t.sat_factor <= 1.0 + p.jitter_sat);
    }
  }
  CHECK(flips > n * 0.25 - 3 * std::sqrt(n * 0.25 * 0.75));
  CHECK(flips < n * 0.25 + 3 * std::sqrt(n * 0.25 * 0.75));
}

TEST_CASE("the default concrete transform is the identity") {
  csi::Image x = noisy_image(12, 1);
  csi::ConcreteAugmentation t;
  CHECK(t.apply(x).data == x.data);

  csi::AugmentationPolicy id = csi::AugmentationPolicy::identity();
  csi::Rng rng(2);
  CHECK(csi::sample_augmentation(id, rng).apply(x).data == x.data);
}

TEST_CASE("concrete pieces act as specified") {
  csi::Image x = noisy_image(16, 3);
  csi::ConcreteAugmentation t;
  t.flip = true;
  CHECK(t.apply(x).data == csi::hflip(x).data);

  t.flip = false;
  t.grayscale = true;
  csi::Image g = t.apply(x);
  for (int y = 0; y < 16; ++y)
    for (int px = 0; px < 16; ++px) {
      CHECK(g.at(y, px, 0) == g.at(y, px, 1));
      CHECK(g.at(y, px, 1) == g.at(y, px, 2));
    }

  t.grayscale = false;
  t.crop_area = 0.25;
  t.crop_cy = t.crop_cx = 0.0;
  csi::Image c = t.apply(x);
  CHECK(c.h == 16);
  CHECK(c.w == 16);
  CHECK(csi::mean_abs_diff(c, x) > 0.0);
}

TEST_CASE("policy validation rejects broken ranges") {
  csi::AugmentationPolicy p;
  p.crop_area_lo = 0.0;
  CHECK_THROWS_AS(p.validate(), csi::Error);
  p = csi::AugmentationPolicy{};
  p.flip_prob = 1.5;
  CHECK_THROWS_AS(p.validate(), csi::Error);
  p = csi::AugmentationPolicy{};
  p.jitter_sat = 1.0;
  CHECK_THROWS_AS(p.validate(), csi::Error);
  CHECK_NOTHROW(csi::AugmentationPolicy{}.validate());

  csi::json j = csi::AugmentationPolicy{}.to_json();
  csi::AugmentationPolicy back = csi::AugmentationPolicy::from_json(j);
  CHECK(back.to_json() == j);
}

TEST_CASE("rotation family members are the quarter turns") {
  csi::ShiftFamilyParams fp;
  csi::ShiftFamily fam = csi::make_shift_family("rotate", fp, 7);
  REQUIRE(fam.k() == 4);
  csi::Image x = noisy_image(10, 9);
  CHECK(csi::apply_shift(x, fam, 0).data == x.data);
  for (int k = 1; k < 4; ++k) CHECK(csi::apply_shift(x, fam, k).data == csi::rot90(x, k).data);
  CHECK_THROWS_AS(csi::apply_shift(x, fam, 4), csi::Error);
  CHECK(fam.member_names[0] == "id");
}

TEST_CASE("every built-in family keeps member zero as the identity") {
  csi::ShiftFamilyParams fp;
  csi::Image x = noisy_image(16, 21);
  for (const char* name : {"identity", "rotate", "perm", "noise", "blur", "cutout", "sobel"}) {
    csi::ShiftFamily fam = csi::make_shift_family(name, fp, 3);
    CHECK(fam.k() >= 1);
    CHECK(csi::apply_shift(x, fam, 0).data == x.data);
    for (int k = 1; k < fam.k(); ++k) {
      csi::Image y = csi::apply_shift(x, fam, k);
      CHECK(y.h == x.h);
      CHECK(csi::mean_abs_diff(y, x) > 0.0);
    }
  }
}

TEST_CASE("content-keyed shifts are bit-stable per input") {
  csi::ShiftFamilyParams fp;
  for (const char* name : {"noise", "cutout"}) {
    csi::ShiftFamily fam = csi::make_shift_family(name, fp, 11);
    csi::Image a = noisy_image(12, 1), b = noisy_image(12, 2);
    csi::Image a1 = csi::apply_shift(a, fam, 1);
    csi::Image a2 = csi::apply_shift(a, fam, 1);
    CHECK(a1.data == a2.data);  // same input, same perturbation
    csi::Image b1 = csi::apply_shift(b, fam, 1);
    CHECK(csi::mean_abs_diff(a1, a) > 0.0);
    CHECK(a1.data != b1.data);
  }
}

TEST_CASE("block permutation rearranges pixels without changing them") {
  csi::ShiftFamilyParams fp;
  fp.perm_grid = 2;
  fp.perm_k = 3;
  csi::ShiftFamily fam = csi::make_shift_family("perm", fp, 19);
  CHECK(fam.k() == 3);
  csi::Image x = noisy_image(8, 5);
  for (int k = 1; k < fam.k(); ++k) {
    csi::Image y = csi::apply_shift(x, fam, k);
    CHECK(sorted_pixels(y) == sorted_pixels(x));
    CHECK(y.data != x.data);
  }
}

TEST_CASE("family composition forms the labeled product") {
  csi::ShiftFamilyParams fp;
  csi::ShiftFamily rot = csi::make_shift_family("rotate", fp, 3);
  csi::ShiftFamily noise = csi::make_shift_family("noise", fp, csi::derive_seed(3, 1));
  csi::ShiftFamily prod = csi::compose_shift_families(rot, noise);
  CHECK(prod.k() == 8);
  csi::Image x = noisy_image(12, 4);
  CHECK(csi::apply_shift(x, prod, 0).data == x.data);

  // spec string builds the same product
  csi::ShiftFamily spec = csi::make_shift_family_spec("rotate*noise", fp, 3);
  CHECK(spec.to_json() == prod.to_json());
  CHECK_THROWS_AS(csi::compose_shift_families(rot, noise, 5), csi::Error);
  CHECK_THROWS_AS(csi::make_shift_family_spec("rotate*unknown", fp, 3), csi::Error);
}

TEST_CASE("families serialize round trip") {
  csi::ShiftFamilyParams fp;
  csi::ShiftFamily fam = csi::make_shift_family_spec("rotate*cutout", fp, 13);
  csi::ShiftFamily back = csi::ShiftFamily::from_json(fam.to_json());
  CHECK(back.to_json() == fam.to_json());
  csi::Image x = noisy_image(12, 8);
  for (int k = 0; k < fam.k(); ++k)
    CHECK(csi::apply_shift(x, back, k).data == csi::apply_shift(x, fam, k).data);
}
