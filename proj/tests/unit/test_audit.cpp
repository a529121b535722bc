#include <doctest.h>

#include "csi/audit.hpp"

namespace {

csi::Sample wrap(csi::Image im, const char* id) {
  csi::Sample s;
  s.pixels = std::move(im);
  s.id = id;
  return s;
}

csi::Image constant_image(int hw, double v) {
  csi::Image im(hw, hw, 3);
  for (double& p : im.data) p = v;
  return im;
}

csi::Image checkerboard(int hw) {
  csi::Image im(hw, hw, 1);
  for (int y = 0; y < hw; ++y)
    for (int x = 0; x < hw; ++x) im.at(y, x, 0) = (y + x) % 2 ? 1.0 : 0.0;
  return im;
}

}  // namespace

TEST_CASE("total variation matches hand-computed canonical images") {
  CHECK(csi::total_variation(constant_image(8, 0.3)) == 0.0);

  // single horizontal edge 0|1 in a 1x2 image: one pair, squared diff 1
  csi::Image pair(1, 2, 1);
  pair.at(0, 0, 0) = 0.0;
  pair.at(0, 1, 0) = 1.0;
  CHECK(csi::total_variation(pair) == 1.0);

  // 2x2 checkerboard: 4 unordered neighbor pairs, each differs by 1
  CHECK(csi::total_variation(checkerboard(2)) == 4.0);

  // n x n checkerboard: 2*n*(n-1) pairs
  CHECK(csi::total_variation(checkerboard(6)) == 2.0 * 6 * 5);

  // channels add independently
  csi::Image two(1, 2, 2);
  two.at(0, 0, 0) = 0.0;
  two.at(0, 1, 0) = 1.0;
  two.at(0, 0, 1) = 0.25;
  two.at(0, 1, 1) = 0.75;
  CHECK(csi::total_variation(two) == doctest::Approx(1.0 + 0.25).epsilon(1e-12));
}

TEST_CASE("total variation is translation invariant and quadratic in contrast") {
  csi::Image base = checkerboard(4);
  csi::Image shifted = base;
  for (double& v : shifted.data) v = 0.3 + 0.4 * v;  // affine: contrast 0.4
  CHECK(csi::smoothness_score(shifted, csi::total_variation(base) * 0.16) ==
        doctest::Approx(0.0).epsilon(1e-12));
  CHECK(csi::total_variation(shifted) ==
        doctest::Approx(0.16 * csi::total_variation(base)).epsilon(1e-12));
}

TEST_CASE("smoothness scores measure distance from the training mean") {
  std::vector<csi::Sample> train = {wrap(constant_image(4, 0.2), "a"),
                                    wrap(checkerboard(4), "b")};
  double mean_tv = csi::mean_total_variation(train);
  CHECK(mean_tv == doctest::Approx(0.5 * (0.0 + 24.0)).epsilon(1e-12));
  CHECK(csi::smoothness_score(constant_image(4, 0.9), mean_tv) ==
        doctest::Approx(12.0).epsilon(1e-12));
  CHECK(csi::smoothness_score(checkerboard(4), train) == doctest::Approx(12.0).epsilon(1e-12));

  csi::SmoothnessStats stats = csi::smoothness_stats(train, mean_tv);
  CHECK(stats.tv == std::vector<double>{0.0, 24.0});
  CHECK(stats.scores == std::vector<double>{12.0, 12.0});
  CHECK_THROWS_AS(csi::mean_total_variation({}), csi::Error);
}

TEST_CASE("the audit flags trivially separable candidates and passes the split itself") {
  csi::Rng rng(5);
  auto textured = [&](const char* id) {
    csi::Image im(8, 8, 3);
    for (double& v : im.data) v = rng.uniform();
    return wrap(std::move(im), id);
  };
  std::vector<csi::Sample> train, test, flat;
  for (int i = 0; i < 12; ++i) train.push_back(textured("tr"));
  for (int i = 0; i < 12; ++i) test.push_back(textured("te"));
  for (int i = 0; i < 12; ++i) flat.push_back(wrap(constant_image(8, 0.1 + 0.05 * i), "fl"));

  std::map<std::string, std::vector<csi::Sample>> candidates = {{"flat", flat},
                                                                {"self", test}};
  csi::AuditReport rep = csi::audit_report(train, test, candidates);
  REQUIRE(rep.rows.size() == 2);
  const csi::AuditRow* flat_row = nullptr;
  const csi::AuditRow* self_row = nullptr;
  for (const auto& r : rep.rows) {
    if (r.name == "flat") flat_row = &r;
    if (r.name == "self") self_row = &r;
  }
  REQUIRE(flat_row != nullptr);
  REQUIRE(self_row != nullptr);
  CHECK(flat_row->detect_auroc > 0.95);
  CHECK(flat_row->flagged);
  CHECK(self_row->detect_auroc == 0.5);  // identical sets tie every pair
  CHECK_FALSE(self_row->flagged);

  csi::AuditReport back = csi::AuditReport::from_json(rep.to_json());
  CHECK(back.to_json() == rep.to_json());
  CHECK(rep.to_table().find("flat") != std::string::npos);

  CHECK_THROWS_AS(csi::audit_report({}, test, candidates), csi::Error);
  CHECK_THROWS_AS(csi::audit_report(train, test, {}), csi::Error);
}
