#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "csi/model.hpp"
#include "csi/objectives.hpp"

namespace {

// Independent oracle: per-anchor double loop over normalized columns.
// Anchors without positives are skipped and the mean renormalized.
double naive_grouped(const csi::nn::Mat& z, const std::vector<long>& groups, double tau) {
  const long n = z.cols();
  std::vector<Eigen::VectorXd> u;
  u.reserve(static_cast<std::size_t>(n));
  for (long j = 0; j < n; ++j) u.push_back(z.col(j).normalized());
  double sum = 0.0;
  int active = 0;
  for (long a = 0; a < n; ++a) {
    std::vector<double> s_all, s_pos;
    for (long b = 0; b < n; ++b) {
      if (b == a) continue;
      double s = u[static_cast<std::size_t>(a)].dot(u[static_cast<std::size_t>(b)]) / tau;
      s_all.push_back(s);
      if (groups[static_cast<std::size_t>(b)] == groups[static_cast<std::size_t>(a)])
        s_pos.push_back(s);
    }
    if (s_pos.empty()) continue;
    double mx = *std::max_element(s_all.begin(), s_all.end());
    double ea = 0.0, ep = 0.0;
    for (double s : s_all) ea += std::exp(s - mx);
    for (double s : s_pos) ep += std::exp(s - mx);
    sum += (std::log(ea) - std::log(ep)) / static_cast<double>(s_pos.size());
    ++active;
  }
  return active > 0 ? sum / active : 0.0;
}

csi::ModelBundle tiny_bundle(const csi::ShiftFamily& family, int num_classes,
                             std::uint64_t seed) {
  csi::ModelConfig mc;
  mc.image_hw = 16;
  mc.width = 8;
  mc.proj_dim = 4;
  mc.num_shifts = family.k();
  mc.num_classes = num_classes;
  mc.with_class_head = num_classes >= 2;
  mc.with_joint_head = num_classes >= 2;
  return csi::ModelBundle(mc, family, seed);
}

std::vector<csi::Sample> random_batch(int b, int hw, csi::Rng& rng, int num_classes = 0) {
  std::vector<csi::Sample> out;
  for (int i = 0; i < b; ++i) {
    csi::Sample s;
    s.pixels = csi::Image(hw, hw, 3);
    for (double& v : s.pixels.data) v = rng.uniform();
    if (num_classes > 0)
      s.label = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(num_classes)));
    s.id = "t-" + std::to_string(i);
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace

TEST_CASE("contrastive primitive matches a hand-computed two-candidate case") {
  Eigen::VectorXd q(2), p(2), n(2);
  q << 1.0, 0.0;
  p << 1.0, 1.0;  // cos = 1/sqrt(2)
  n << 0.0, 1.0;  // cos = 0
  double tau = 0.5;
  double sp = (1.0 / std::sqrt(2.0)) / tau;
  double want = std::log(std::exp(sp) + std::exp(0.0)) - sp;
  double got = csi::contrastive_loss(q, {p}, {n}, tau);
  CHECK(got == doctest::Approx(want).epsilon(1e-12));
  CHECK_THROWS_AS(csi::contrastive_loss(q, {}, {n}, tau), csi::Error);
  CHECK_THROWS_AS(csi::contrastive_loss(q, {p}, {n}, 0.0), csi::Error);
}

TEST_CASE("group layouts follow the shift-major view order") {
  using csi::LossMode;
  // unshifted modes collapse K to 1
  CHECK(csi::contrastive_groups(LossMode::Simclr, 2, 3, {}, false) ==
        std::vector<long>{0, 1, 0, 1});
  // con-SI: instance i under shift k forms group k*B+i
  CHECK(csi::contrastive_groups(LossMode::ConSi, 2, 2, {}, false) ==
        std::vector<long>{0, 1, 0, 1, 2, 3, 2, 3});
  // align ablation folds shifts back into the instance group
  CHECK(csi::contrastive_groups(LossMode::ConSi, 2, 2, {}, true) ==
        std::vector<long>{0, 1, 0, 1, 0, 1, 0, 1});
  // supervised: label is the group
  CHECK(csi::contrastive_groups(LossMode::Supclr, 3, 1, {1, 0, 1}, false) ==
        std::vector<long>{1, 0, 1, 1, 0, 1});
  // joint (label, shift) groups: y*K + k
  CHECK(csi::contrastive_groups(LossMode::SupCsi, 2, 2, {1, 0}, false) ==
        std::vector<long>{2, 0, 2, 0, 3, 1, 3, 1});
  CHECK(csi::contrastive_groups(LossMode::SupCsi, 2, 2, {1, 0}, true) ==
        std::vector<long>{1, 0, 1, 0, 1, 0, 1, 0});
}

TEST_CASE("pipeline losses match the naive double-loop oracle") {
  csi::ShiftFamilyParams fp;
  csi::ShiftFamily rotate = csi::make_shift_family("rotate", fp, 3);
  csi::ShiftFamily identity = csi::make_shift_family("identity", fp, 3);
  csi::AugmentationPolicy policy;
  for (std::uint64_t seed = 0; seed < 15; ++seed) {
    csi::Rng rng(seed);
    int b = 1 + static_cast<int>(rng.uniform_index(4));
    auto batch = random_batch(b, 16, rng, 3);
    double tau = 0.2 + 0.4 * rng.uniform();

    csi::LossProbe probe;
    csi::Rng draw(seed * 31 + 1);
    double got = csi::simclr_loss(batch, policy, tiny_bundle(identity, 0, seed), tau, draw,
                                  &probe);
    CHECK(got == doctest::Approx(naive_grouped(probe.z, probe.groups, tau)).epsilon(1e-9));

    csi::ModelBundle shifted = tiny_bundle(rotate, 0, seed);
    csi::Rng draw2(seed * 31 + 2);
    got = csi::con_si_loss(batch, rotate, policy, shifted, tau, draw2, &probe);
    CHECK(probe.z.cols() == 2 * b * rotate.k());
    CHECK(got == doctest::Approx(naive_grouped(probe.z, probe.groups, tau)).epsilon(1e-9));

    csi::Rng draw3(seed * 31 + 3);
    got = csi::supclr_loss(batch, policy, tiny_bundle(identity, 4, seed), tau, draw3, &probe);
    CHECK(got == doctest::Approx(naive_grouped(probe.z, probe.groups, tau)).epsilon(1e-9));

    csi::ModelBundle joint = tiny_bundle(rotate, 4, seed);
    csi::Rng draw4(seed * 31 + 4);
    got = csi::sup_csi_loss(batch, rotate, policy, joint, tau, draw4, &probe);
    CHECK(got == doctest::Approx(naive_grouped(probe.z, probe.groups, tau)).epsilon(1e-9));
  }
}

TEST_CASE("losses are invariant to embedding scale") {
  csi::Rng rng(77);
  csi::nn::Mat z(6, 8);
  for (long j = 0; j < z.size(); ++j) z.data()[j] = rng.normal();
  std::vector<long> groups = {0, 1, 2, 3, 0, 1, 2, 3};
  double base = csi::grouped_nt_xent_value(z, groups, 0.5);
  for (double c : {0.1, 3.0})
    CHECK(csi::grouped_nt_xent_value(c * z, groups, 0.5) ==
          doctest::Approx(base).epsilon(1e-6));
}

TEST_CASE("shifted contrast with a single member reduces to the plain losses") {
  csi::ShiftFamilyParams fp;
  csi::ShiftFamily identity = csi::make_shift_family("identity", fp, 9);
  csi::AugmentationPolicy policy;
  csi::Rng data_rng(5);
  auto batch = random_batch(3, 16, data_rng, 2);
  csi::ModelBundle bundle = tiny_bundle(identity, 2, 9);

  csi::Rng a(42), c(42);
  CHECK(csi::simclr_loss(batch, policy, bundle, 0.5, a) ==
        csi::con_si_loss(batch, identity, policy, bundle, 0.5, c));

  csi::Rng d(43), e(43);
  CHECK(csi::supclr_loss(batch, policy, bundle, 0.5, d) ==
        csi::sup_csi_loss(batch, identity, policy, bundle, 0.5, e));
}

TEST_CASE("combined objective composes contrast and shift classification") {
  csi::ShiftFamilyParams fp;
  csi::ShiftFamily rotate = csi::make_shift_family("rotate", fp, 2);
  csi::ModelBundle bundle = tiny_bundle(rotate, 0, 11);
  csi::AugmentationPolicy policy;
  csi::Rng data_rng(6);
  auto batch = random_batch(2, 16, data_rng);

  csi::LossConfig cfg;
  cfg.mode = csi::LossMode::Csi;
  cfg.lambda_cls = 0.7;
  csi::Rng r1(4);
  csi::LossBreakdown bd = csi::csi_loss(batch, rotate, policy, bundle, cfg, r1);
  CHECK(bd.total == bd.con + cfg.lambda_cls * bd.cls);
  CHECK(bd.cls > 0.0);

  // lambda = 0 leaves exactly the shifted contrast value
  cfg.lambda_cls = 0.0;
  csi::Rng r2(4), r3(4);
  csi::LossBreakdown zero = csi::csi_loss(batch, rotate, policy, bundle, cfg, r2);
  CHECK(zero.total == csi::con_si_loss(batch, rotate, policy, bundle, cfg.temperature, r3));
}

TEST_CASE("shift classification term matches a hand cross-entropy") {
  csi::ShiftFamilyParams fp;
  csi::ShiftFamily rotate = csi::make_shift_family("rotate", fp, 2);
  csi::ModelBundle bundle = tiny_bundle(rotate, 0, 13);
  csi::Rng rng(3);
  std::vector<csi::Sample> views;
  for (int k = 0; k < rotate.k(); ++k)
    for (int i = 0; i < 2; ++i) {
      csi::Sample s = random_batch(1, 16, rng)[0];
      s.pixels = csi::apply_shift(s.pixels, rotate, k);
      s.shift_label = k;
      views.push_back(std::move(s));
    }

  double got = csi::cls_si_loss(views, bundle);

  // same forward semantics, cross-entropy recomputed by hand
  csi::nn::Tape tape;
  csi::nn::Binding bind(tape, const_cast<csi::nn::ParamStore&>(bundle.params()), true, false);
  csi::nn::Mat px = csi::pack_batch(csi::pixels_of(views), 16, 3);
  auto fw = bundle.forward(bind, px);
  csi::nn::Mat logits = tape.value(bundle.shift_logits_var(bind, fw.features));
  double want = 0.0;
  for (long j = 0; j < logits.cols(); ++j) {
    Eigen::VectorXd col = logits.col(j);
    double mx = col.maxCoeff();
    double lse = std::log((col.array() - mx).exp().sum()) + mx;
    want += lse - col(views[static_cast<std::size_t>(j)].shift_label);
  }
  want /= static_cast<double>(logits.cols());
  CHECK(got == doctest::Approx(want).epsilon(1e-12));

  views[0].shift_label = -1;
  CHECK_THROWS_AS(csi::cls_si_loss(views, bundle), csi::Error);
}

TEST_CASE("probe captures the shift-major pipeline layout") {
  csi::ShiftFamilyParams fp;
  csi::ShiftFamily rotate = csi::make_shift_family("rotate", fp, 1);
  csi::ModelBundle bundle = tiny_bundle(rotate, 0, 21);
  csi::AugmentationPolicy policy;
  csi::Rng data_rng(8);
  auto batch = random_batch(2, 16, data_rng);
  csi::LossProbe probe;
  csi::Rng r(1);
  csi::con_si_loss(batch, rotate, policy, bundle, 0.5, r, &probe);
  CHECK(probe.z.rows() == 4);
  CHECK(probe.z.cols() == 2 * 2 * 4);
  CHECK(probe.shift_labels ==
        std::vector<int>{0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2, 2, 3, 3, 3, 3});
  CHECK(probe.class_labels == std::vector<int>(16, -1));
  CHECK(probe.groups.size() == 16);
}

TEST_CASE("the view cap rejects oversized batches") {
  csi::ShiftFamilyParams fp;
  csi::ShiftFamily rotate = csi::make_shift_family("rotate", fp, 1);
  csi::ModelBundle bundle = tiny_bundle(rotate, 0, 2);
  csi::AugmentationPolicy policy;
  csi::Rng data_rng(9);
  auto batch = random_batch(3, 16, data_rng);
  csi::LossConfig cfg;
  cfg.mode = csi::LossMode::Csi;
  cfg.max_views = 8;  // needs 2*3*4 = 24
  csi::Rng r(1);
  CHECK_THROWS_WITH_AS(csi::csi_loss(batch, rotate, policy, bundle, cfg, r),
                       doctest::Contains("cap"), csi::Error);
}

TEST_CASE("supervised modes reject unlabeled samples") {
  csi::ShiftFamilyParams fp;
  csi::ShiftFamily identity = csi::make_shift_family("identity", fp, 2);
  csi::ModelBundle bundle = tiny_bundle(identity, 2, 3);
  csi::AugmentationPolicy policy;
  csi::Rng data_rng(10);
  auto batch = random_batch(2, 16, data_rng);  // labels stay -1
  csi::Rng r(1);
  CHECK_THROWS_AS(csi::supclr_loss(batch, policy, bundle, 0.5, r), csi::Error);
}
