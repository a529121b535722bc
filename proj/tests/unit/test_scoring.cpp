#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "csi/scoring.hpp"

namespace {

csi::ModelBundle tiny_bundle(const csi::ShiftFamily& family, std::uint64_t seed) {
  csi::ModelConfig mc;
  mc.image_hw = 16;
  mc.width = 8;
  mc.proj_dim = 4;
  mc.num_shifts = family.k();
  return csi::ModelBundle(mc, family, seed);
}

std::vector<csi::Sample> toy_set(int n, int hw, std::uint64_t seed) {
  std::vector<csi::Sample> out;
  csi::Rng rng(seed);
  for (int i = 0; i < n; ++i) {
    csi::Sample s;
    s.pixels = csi::Image(hw, hw, 3);
    for (double& v : s.pixels.data) v = rng.uniform();
    s.id = "r" + std::to_string(i);
    out.push_back(std::move(s));
  }
  return out;
}

// reference with hand-set directions: unit vectors along axes
csi::ScorerState axis_state(int k, csi::ScoreMode mode) {
  csi::ScorerState st;
  for (int s = 0; s < k; ++s) {
    csi::nn::Mat u = csi::nn::Mat::Zero(3, 2);
    u(0, 0) = 1.0;  // +x
    u(1, 1) = 1.0;  // +y
    st.reference.unit.push_back(u);
    Eigen::VectorXd n(2);
    n << 2.0, 4.0;
    st.reference.norms.push_back(n);
    Eigen::VectorXd c(2);
    c << 1.0, 3.0;
    st.reference.cls_values.push_back(c);
  }
  st.score_mode = mode;
  csi::ShiftFamilyParams fp;
  st.family = csi::make_shift_family(k == 1 ? "identity" : "rotate", fp, 1);
  st.policy = csi::AugmentationPolicy::identity();
  csi::recompute_lambdas(st);
  return st;
}

}  // namespace

TEST_CASE("balance terms follow the stored reference") {
  csi::ScorerState st = axis_state(1, csi::ScoreMode::SimNorm);
  // lambda_con = M / sum(norm) = 2/6 ; lambda_cls = M / |sum(cls)| = 2/4
  CHECK(st.lambda_con[0] == doctest::Approx(2.0 / 6.0).epsilon(1e-12));
  CHECK(st.lambda_cls[0] == doctest::Approx(2.0 / 4.0).epsilon(1e-12));

  st.balanced = false;
  csi::recompute_lambdas(st);
  CHECK(st.lambda_con[0] == 1.0);
  CHECK(st.lambda_cls[0] == 1.0);
}

TEST_CASE("embedding scores compose max-similarity norm and logit terms") {
  csi::ScorerState st = axis_state(1, csi::ScoreMode::SimNorm);
  csi::nn::Mat z(3, 1);
  z << 3.0, 0.0, 4.0;  // norm 5, best cosine 3/5 against +x
  Eigen::VectorXd cls(1);
  cls << 7.0;

  // plain score: best cosine times embedding norm, no balancing
  double con = csi::score_embedding(z, cls, csi::ScoreKind::SCon, st);
  CHECK(con == doctest::Approx(0.6 * 5.0).epsilon(1e-12));

  st.score_mode = csi::ScoreMode::Sim;
  CHECK(csi::score_embedding(z, cls, csi::ScoreKind::SCon, st) ==
        doctest::Approx(0.6).epsilon(1e-12));
  st.score_mode = csi::ScoreMode::Norm;
  CHECK(csi::score_embedding(z, cls, csi::ScoreKind::SCon, st) ==
        doctest::Approx(5.0).epsilon(1e-12));

  st.score_mode = csi::ScoreMode::SimNorm;
  double cls_term = csi::score_embedding(z, cls, csi::ScoreKind::SClsSi, st);
  CHECK(cls_term == doctest::Approx((2.0 / 4.0) * 7.0).epsilon(1e-12));
  double con_si = csi::score_embedding(z, cls, csi::ScoreKind::SConSi, st);
  CHECK(con_si == doctest::Approx((2.0 / 6.0) * 0.6 * 5.0).epsilon(1e-12));
  double csi_score = csi::score_embedding(z, cls, csi::ScoreKind::SCsi, st);
  CHECK(csi_score == con_si + cls_term);  // exact composition

  // without balancing a single member collapses onto the plain score
  st.balanced = false;
  csi::recompute_lambdas(st);
  CHECK(csi::score_embedding(z, cls, csi::ScoreKind::SConSi, st) == con);
}

TEST_CASE("shifted scores sum the per-shift contributions") {
  csi::ScorerState st = axis_state(4, csi::ScoreMode::SimNorm);
  csi::nn::Mat z(3, 4);
  Eigen::VectorXd cls(4);
  for (int k = 0; k < 4; ++k) {
    z(0, k) = 1.0 + k;  // aligned with +x, norm 1+k
    z(1, k) = 0.0;
    z(2, k) = 0.0;
    cls(k) = 0.5 * k;
  }
  double want_con = 0.0, want_cls = 0.0;
  for (int k = 0; k < 4; ++k) {
    want_con += st.lambda_con[static_cast<std::size_t>(k)] * (1.0 * (1.0 + k));
    want_cls += st.lambda_cls[static_cast<std::size_t>(k)] * 0.5 * k;
  }
  CHECK(csi::score_embedding(z, cls, csi::ScoreKind::SConSi, st) ==
        doctest::Approx(want_con).epsilon(1e-12));
  CHECK(csi::score_embedding(z, cls, csi::ScoreKind::SClsSi, st) ==
        doctest::Approx(want_cls).epsilon(1e-12));
  CHECK(csi::score_embedding(z, cls, csi::ScoreKind::SCsi, st) ==
        csi::score_embedding(z, cls, csi::ScoreKind::SConSi, st) +
            csi::score_embedding(z, cls, csi::ScoreKind::SClsSi, st));

  csi::nn::Mat bad(3, 2);
  CHECK_THROWS_AS(csi::score_embedding(bad, cls, csi::ScoreKind::SCsi, st), csi::Error);
}

TEST_CASE("scores are invariant to a joint reference and query rescale") {
  csi::ScorerState st = axis_state(4, csi::ScoreMode::SimNorm);
  csi::Rng rng(3);
  csi::nn::Mat z(3, 4);
  for (long i = 0; i < z.size(); ++i) z.data()[i] = rng.normal();
  Eigen::VectorXd cls(4);
  for (int k = 0; k < 4; ++k) cls(k) = rng.normal();

  double base = csi::score_embedding(z, cls, csi::ScoreKind::SConSi, st);
  for (double c : {0.1, 3.0}) {
    csi::ScorerState scaled = st;
    for (int k = 0; k < 4; ++k) scaled.reference.norms[static_cast<std::size_t>(k)] *= c;
    csi::recompute_lambdas(scaled);
    double got = csi::score_embedding((c * z).eval(), cls, csi::ScoreKind::SConSi, scaled);
    CHECK(got == doctest::Approx(base).epsilon(1e-9));
  }
}

TEST_CASE("fitting builds per-shift references from clean shifted images") {
  csi::ShiftFamilyParams fp;
  csi::ShiftFamily fam = csi::make_shift_family("rotate", fp, 5);
  csi::ModelBundle bundle = tiny_bundle(fam, 5);
  auto train = toy_set(6, 16, 1);
  csi::ScoringConfig sc;
  sc.seed = 9;
  csi::ScorerState st = csi::fit_scorer(bundle, fam, train, sc);
  CHECK(st.reference.k() == 4);
  CHECK(st.reference.m() == 6);
  REQUIRE(st.lambda_con.size() == 4);

  // reference columns are the unit embeddings of apply_shift(x, k)
  for (int k = 0; k < 4; ++k) {
    std::vector<csi::Image> shifted;
    for (const auto& s : train) shifted.push_back(csi::apply_shift(s.pixels, fam, k));
    csi::nn::Mat z = bundle.embed(shifted);  // rows = samples
    double lam_sum = 0.0;
    for (int m = 0; m < 6; ++m) {
      Eigen::VectorXd col = z.row(m).transpose();
      CHECK(st.reference.norms[static_cast<std::size_t>(k)](m) ==
            doctest::Approx(col.norm()).epsilon(1e-12));
      double cos = st.reference.unit[static_cast<std::size_t>(k)].col(m).dot(col) / col.norm();
      CHECK(cos == doctest::Approx(1.0).epsilon(1e-9));
      lam_sum += col.norm();
    }
    CHECK(st.lambda_con[static_cast<std::size_t>(k)] ==
          doctest::Approx(6.0 / lam_sum).epsilon(1e-9));
  }

  csi::ShiftFamily other = csi::make_shift_family("noise", fp, 5);
  CHECK_THROWS_AS(csi::fit_scorer(bundle, other, train, sc), csi::Error);
  CHECK_THROWS_AS(csi::fit_scorer(bundle, fam, {}, sc), csi::Error);
}

TEST_CASE("the coreset collapses two clusters onto their spherical means") {
  // 6 points around +x, 6 around +y on the unit circle in 3d
  csi::ReferenceSet ref;
  csi::nn::Mat u(3, 12);
  Eigen::VectorXd norms(12), cls(12);
  for (int i = 0; i < 12; ++i) {
    double eps = 0.05 * (i % 3) - 0.05;
    Eigen::Vector3d v = i < 6 ? Eigen::Vector3d(1.0, eps, 0.0) : Eigen::Vector3d(eps, 1.0, 0.0);
    u.col(i) = v.normalized();
    norms(i) = i < 6 ? 2.0 : 6.0;
    cls(i) = i < 6 ? 1.0 : 5.0;
  }
  ref.unit.push_back(u);
  ref.norms.push_back(norms);
  ref.cls_values.push_back(cls);

  csi::ReferenceSet small = csi::build_coreset(ref, 2.0 / 12.0, 42);
  REQUIRE(small.k() == 1);
  REQUIRE(small.unit[0].cols() == 2);
  // each center is near one cluster axis and carries that cluster's means
  for (int c = 0; c < 2; ++c) {
    CHECK(small.unit[0].col(c).norm() == doctest::Approx(1.0).epsilon(1e-12));
    double ax = std::abs(small.unit[0].col(c)(0));
    double ay = std::abs(small.unit[0].col(c)(1));
    if (ax > ay) {
      CHECK(ax > 0.99);
      CHECK(small.norms[0](c) == doctest::Approx(2.0).epsilon(1e-9));
      CHECK(small.cls_values[0](c) == doctest::Approx(1.0).epsilon(1e-9));
    } else {
      CHECK(ay > 0.99);
      CHECK(small.norms[0](c) == doctest::Approx(6.0).epsilon(1e-9));
      CHECK(small.cls_values[0](c) == doctest::Approx(5.0).epsilon(1e-9));
    }
  }

  // full ratio returns the reference unchanged
  csi::ReferenceSet same = csi::build_coreset(ref, 1.0, 42);
  CHECK(same.unit[0] == ref.unit[0]);
  CHECK(same.norms[0] == ref.norms[0]);
  CHECK_THROWS_AS(csi::build_coreset(ref, 0.0, 42), csi::Error);
}

TEST_CASE("scorers persist bit-exactly") {
  std::string path =
      (std::filesystem::temp_directory_path() / "csi-test-scorer.csis").string();
  csi::ShiftFamilyParams fp;
  csi::ShiftFamily fam = csi::make_shift_family("rotate", fp, 7);
  csi::ModelBundle bundle = tiny_bundle(fam, 7);
  auto train = toy_set(5, 16, 2);
  csi::ScoringConfig sc;
  sc.ensemble_n = 2;
  sc.seed = 13;
  csi::ScorerState st = csi::fit_scorer(bundle, fam, train, sc);
  csi::save_scorer(path, st, {{"tag", "test"}});

  csi::json rc;
  csi::ScorerState back = csi::load_scorer(path, &rc);
  CHECK(rc == csi::json{{"tag", "test"}});
  CHECK(back.reference.k() == st.reference.k());
  for (int k = 0; k < st.reference.k(); ++k) {
    CHECK(back.reference.unit[static_cast<std::size_t>(k)] ==
          st.reference.unit[static_cast<std::size_t>(k)]);
    CHECK(back.reference.norms[static_cast<std::size_t>(k)] ==
          st.reference.norms[static_cast<std::size_t>(k)]);
  }
  CHECK(back.lambda_con == st.lambda_con);
  CHECK(back.ensemble_n == st.ensemble_n);
  CHECK(back.family.to_json() == st.family.to_json());

  // loaded scorers give bit-identical scores
  csi::Image probe = toy_set(1, 16, 3)[0].pixels;
  CHECK(csi::s_csi(probe, back, bundle) == csi::s_csi(probe, st, bundle));
  std::remove(path.c_str());
}

TEST_CASE("image-level scores agree with the embedding seam") {
  csi::ShiftFamilyParams fp;
  csi::ShiftFamily fam = csi::make_shift_family("rotate", fp, 4);
  csi::ModelBundle bundle = tiny_bundle(fam, 4);
  auto train = toy_set(5, 16, 6);
  csi::ScoringConfig sc;
  sc.seed = 3;
  csi::ScorerState st = csi::fit_scorer(bundle, fam, train, sc);

  csi::Image x = toy_set(1, 16, 9)[0].pixels;
  csi::nn::Mat z(4, 4);
  Eigen::VectorXd cls(4);
  for (int k = 0; k < 4; ++k) {
    csi::Image shifted = csi::apply_shift(x, fam, k);
    z.col(k) = bundle.embed({shifted}).row(0).transpose();
    cls(k) = bundle.shift_logits({shifted})(0, k);
  }
  CHECK(csi::s_con(x, st, bundle) ==
        doctest::Approx(csi::score_embedding(z, cls, csi::ScoreKind::SCon, st)).epsilon(1e-12));
  CHECK(csi::s_csi(x, st, bundle) ==
        doctest::Approx(csi::score_embedding(z, cls, csi::ScoreKind::SCsi, st)).epsilon(1e-12));
  CHECK(csi::s_csi(x, st, bundle) == csi::s_con_si(x, st, bundle) + csi::s_cls_si(x, st, bundle));
}

TEST_CASE("batch scoring is deterministic and respects the ensemble settings") {
  csi::ShiftFamilyParams fp;
  csi::ShiftFamily fam = csi::make_shift_family("rotate", fp, 8);
  csi::ModelBundle bundle = tiny_bundle(fam, 8);
  auto train = toy_set(4, 16, 4);
  csi::ScoringConfig sc;
  sc.ensemble_n = 3;
  sc.seed = 21;
  csi::ScorerState st = csi::fit_scorer(bundle, fam, train, sc);

  std::vector<csi::Image> xs;
  for (const auto& s : toy_set(3, 16, 5)) xs.push_back(s.pixels);
  std::vector<double> a = csi::score_samples(xs, csi::ScoreKind::SCsi, st, bundle);
  std::vector<double> b = csi::score_samples(xs, csi::ScoreKind::SCsi, st, bundle);
  CHECK(a == b);
  REQUIRE(a.size() == 3);

  // additivity holds for the ensembled path too
  std::vector<double> con = csi::score_samples(xs, csi::ScoreKind::SConSi, st, bundle);
  std::vector<double> cls = csi::score_samples(xs, csi::ScoreKind::SClsSi, st, bundle);
  for (int i = 0; i < 3; ++i)
    CHECK(a[static_cast<std::size_t>(i)] ==
          con[static_cast<std::size_t>(i)] + cls[static_cast<std::size_t>(i)]);

  // single-draw identity policy matches the plain single evaluation
  csi::ScorerState plain = st;
  plain.ensemble_n = 1;
  plain.policy = csi::AugmentationPolicy::identity();
  std::vector<double> single = csi::score_samples(xs, csi::ScoreKind::SConSi, plain, bundle);
  for (int i = 0; i < 3; ++i)
    CHECK(single[static_cast<std::size_t>(i)] ==
          doctest::Approx(csi::s_con_si(xs[static_cast<std::size_t>(i)], plain, bundle))
              .epsilon(1e-12));
}
