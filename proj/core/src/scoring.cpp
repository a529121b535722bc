#include "csi/scoring.hpp"

#include <cmath>
#include <iostream>

namespace csi {

using nn::Mat;

const char* score_mode_name(ScoreMode m) {
  switch (m) {
    case ScoreMode::Sim: return "sim";
    case ScoreMode::Norm: return "norm";
    case ScoreMode::SimNorm: return "sim_norm";
  }
  fail("unknown score mode");
}

ScoreMode score_mode_from_name(const std::string& name) {
  if (name == "sim") return ScoreMode::Sim;
  if (name == "norm") return ScoreMode::Norm;
  if (name == "sim_norm") return ScoreMode::SimNorm;
  fail("unknown score mode: " + name + " (valid: sim, norm, sim_norm)");
}

const char* score_kind_name(ScoreKind k) {
  switch (k) {
    case ScoreKind::SCon: return "s_con";
    case ScoreKind::SConSi: return "s_con_si";
    case ScoreKind::SClsSi: return "s_cls_si";
    case ScoreKind::SCsi: return "s_csi";
  }
  fail("unknown score kind");
}

ScoreKind score_kind_from_name(const std::string& name) {
  if (name == "s_con") return ScoreKind::SCon;
  if (name == "s_con_si") return ScoreKind::SConSi;
  if (name == "s_cls_si") return ScoreKind::SClsSi;
  if (name == "s_csi") return ScoreKind::SCsi;
  fail("unknown score kind: " + name + " (valid: s_con, s_con_si, s_cls_si, s_csi)");
}

void ReferenceSet::validate() const {
  require(k() >= 1, "reference set: at least one shift required");
  require(norms.size() == unit.size() && cls_values.size() == unit.size(),
          "reference set: per-shift container sizes differ");
  long m0 = norms[0].size();
  require(m0 >= 1, "reference set: M must be >= 1");
  for (int i = 0; i < k(); ++i) {
    require(unit[static_cast<std::size_t>(i)].cols() == m0 &&
                norms[static_cast<std::size_t>(i)].size() == m0 &&
                cls_values[static_cast<std::size_t>(i)].size() == m0,
            "reference set: identical M required across shifts");
    require(unit[static_cast<std::size_t>(i)].allFinite() &&
                norms[static_cast<std::size_t>(i)].allFinite() &&
                cls_values[static_cast<std::size_t>(i)].allFinite(),
            "reference set: non-finite stored values");
  }
}

void ScorerState::validate() const {
  reference.validate();
  require(static_cast<int>(lambda_con.size()) == reference.k() &&
              static_cast<int>(lambda_cls.size()) == reference.k(),
          "scorer state: one lambda per shift required");
  require(ensemble_n >= 1, "scorer state: ensemble_n must be >= 1");
  if (balanced) {
    // consistency: lambda_con must match the stored reference
    for (int k = 0; k < reference.k(); ++k) {
      double mean_norm = reference.norms[static_cast<std::size_t>(k)].mean();
      require(std::abs(lambda_con[static_cast<std::size_t>(k)] * mean_norm - 1.0) < 1e-6,
              "scorer state: lambda_con inconsistent with stored reference norms");
    }
  }
}

void recompute_lambdas(ScorerState& state) {
  int K = state.reference.k();
  state.lambda_con.assign(static_cast<std::size_t>(K), 1.0);
  state.lambda_cls.assign(static_cast<std::size_t>(K), 1.0);
  if (!state.balanced) return;
  for (int k = 0; k < K; ++k) {
    double norm_sum = state.reference.norms[static_cast<std::size_t>(k)].sum();
    require(norm_sum > 1e-12, "scorer: reference norms sum to zero for shift " + std::to_string(k));
    double M = static_cast<double>(state.reference.m());
    state.lambda_con[static_cast<std::size_t>(k)] = M / norm_sum;
    double cls_sum = state.reference.cls_values[static_cast<std::size_t>(k)].sum();
    if (cls_sum < 0.0)
      std::cerr << "warning: shift " << k
                << " training logit sum is negative; balancing with its absolute value\n";
    if (std::abs(cls_sum) < 1e-12) {
      std::cerr << "warning: shift " << k
                << " training logit sum is ~0; leaving lambda_cls at 1\n";
      state.lambda_cls[static_cast<std::size_t>(k)] = 1.0;
    } else {
      state.lambda_cls[static_cast<std::size_t>(k)] = M / std::abs(cls_sum);
    }
  }
}

namespace {

constexpr int kEvalChunk = 256;

/// Eval-mode embeddings + k-th shift logit for a list of images, chunked.
void embed_with_logits(const ModelBundle& bundle, const std::vector<Image>& images, int shift_k,
                       Mat* z_out, Eigen::VectorXd* cls_out) {
  const int n = static_cast<int>(images.size());
  *z_out = Mat(bundle.config().proj_dim, n);
  *cls_out = Eigen::VectorXd(n);
  for (int start = 0; start < n; start += kEvalChunk) {
    int len = std::min(kEvalChunk, n - start);
    std::vector<Image> chunk(images.begin() + start, images.begin() + start + len);
    Mat z = bundle.embed(chunk);              // len x d_z
    Mat logits = bundle.shift_logits(chunk);  // len x K
    for (int j = 0; j < len; ++j) {
      z_out->col(start + j) = z.row(j).transpose();
      (*cls_out)(start + j) = logits(j, shift_k);
    }
  }
}

struct QueryTerms {
  double sim_max = 0.0;
  double norm = 0.0;
  double cls = 0.0;
};

QueryTerms query_terms(const ScorerState& state, int k, const Eigen::VectorXd& z, double cls_value) {
  QueryTerms t;
  t.norm = z.norm();
  require(t.norm > 1e-12, "score: zero-norm query embedding");
  Eigen::VectorXd dir = z / t.norm;
  t.sim_max = (state.reference.unit[static_cast<std::size_t>(k)].transpose() * dir).maxCoeff();
  t.cls = cls_value;
  return t;
}

double con_term(const ScorerState& state, const QueryTerms& t) {
  switch (state.score_mode) {
    case ScoreMode::Sim: return t.sim_max;
    case ScoreMode::Norm: return t.norm;
    case ScoreMode::SimNorm: return t.sim_max * t.norm;
  }
  fail("unknown score mode");
}

/// Per-shift query embeddings and shift logits of one image.
void shifted_queries(const Image& x, const ScorerState& state, const ModelBundle& bundle,
                     Mat* z_per_shift, Eigen::VectorXd* cls_per_shift) {
  const int K = state.reference.k();
  std::vector<Image> shifted;
  shifted.reserve(static_cast<std::size_t>(K));
  for (int k = 0; k < K; ++k) shifted.push_back(apply_shift(x, state.family, k));
  Mat z = bundle.embed(shifted);              // K x d_z
  Mat logits = bundle.shift_logits(shifted);  // K x K
  *z_per_shift = z.transpose();
  *cls_per_shift = Eigen::VectorXd(K);
  for (int k = 0; k < K; ++k) (*cls_per_shift)(k) = logits(k, k);
}

}  // namespace

double score_embedding(const Mat& z_per_shift, const Eigen::VectorXd& cls_per_shift,
                       ScoreKind kind, const ScorerState& state) {
  const int K = state.reference.k();
  require(z_per_shift.cols() == K && cls_per_shift.size() == K,
          "score_embedding: one query column per shift required");
  require(z_per_shift.rows() == state.reference.unit[0].rows(),
          "score_embedding: embedding dimension mismatch");
  if (kind == ScoreKind::SCon) {
    QueryTerms t = query_terms(state, 0, z_per_shift.col(0), cls_per_shift(0));
    return con_term(state, t);
  }
  double con = 0.0, cls = 0.0;
  for (int k = 0; k < K; ++k) {
    QueryTerms t = query_terms(state, k, z_per_shift.col(k), cls_per_shift(k));
    con += state.lambda_con[static_cast<std::size_t>(k)] * con_term(state, t);
    cls += state.lambda_cls[static_cast<std::size_t>(k)] * t.cls;
  }
  switch (kind) {
    case ScoreKind::SConSi: return con;
    case ScoreKind::SClsSi: return cls;
    case ScoreKind::SCsi: return con + cls;
    case ScoreKind::SCon: break;
  }
  fail("unknown score kind");
}

ScorerState fit_scorer(const ModelBundle& bundle, const ShiftFamily& family,
                       const std::vector<Sample>& train_set, const ScoringConfig& config) {
  require(!train_set.empty(), "fit_scorer: empty training set");
  require(family.to_json() == bundle.family().to_json(),
          "fit_scorer: shift family does not match the one bound to the model");
  require(config.ensemble_n >= 1, "fit_scorer: ensemble_n must be >= 1");
  require(config.coreset_ratio > 0.0 && config.coreset_ratio <= 1.0,
          "fit_scorer: coreset ratio must lie in (0,1]");

  ScorerState state;
  state.score_mode = config.score_mode;
  state.ensemble_n = config.ensemble_n;
  state.controlled_policy = config.controlled_policy;
  state.balanced = config.balanced;
  state.policy = config.policy;
  state.family = family;
  state.coreset_ratio = config.coreset_ratio;
  state.seed = config.seed;

  const int K = family.k();
  std::vector<Image> clean = pixels_of(train_set);
  for (int k = 0; k < K; ++k) {
    std::vector<Image> shifted;
    shifted.reserve(clean.size());
    for (const Image& im : clean) shifted.push_back(apply_shift(im, family, k));
    Mat z;
    Eigen::VectorXd cls;
    embed_with_logits(bundle, shifted, k, &z, &cls);
    Eigen::VectorXd norms(z.cols());
    Mat unit(z.rows(), z.cols());
    for (long j = 0; j < z.cols(); ++j) {
      double n = z.col(j).norm();
      require(n > 1e-12, "fit_scorer: zero-norm reference embedding");
      norms(j) = n;
      unit.col(j) = z.col(j) / n;
    }
    state.reference.unit.push_back(std::move(unit));
    state.reference.norms.push_back(std::move(norms));
    state.reference.cls_values.push_back(std::move(cls));
  }
  state.reference.validate();

  if (config.coreset_ratio < 1.0)
    state.reference = build_coreset(state.reference, config.coreset_ratio,
                                    derive_seed(config.seed, 0x636f7265ULL));
  recompute_lambdas(state);
  state.validate();
  return state;
}

namespace {

double single_image_score(const Image& x, ScoreKind kind, const ScorerState& state,
                          const ModelBundle& bundle) {
  Mat z;
  Eigen::VectorXd cls;
  shifted_queries(x, state, bundle, &z, &cls);
  return score_embedding(z, cls, kind, state);
}

}  // namespace

double s_con(const Image& x, const ScorerState& state, const ModelBundle& bundle) {
  return single_image_score(x, ScoreKind::SCon, state, bundle);
}

double s_con_si(const Image& x, const ScorerState& state, const ModelBundle& bundle) {
  return single_image_score(x, ScoreKind::SConSi, state, bundle);
}

double s_cls_si(const Image& x, const ScorerState& state, const ModelBundle& bundle) {
  return single_image_score(x, ScoreKind::SClsSi, state, bundle);
}

double s_csi(const Image& x, const ScorerState& state, const ModelBundle& bundle) {
  return single_image_score(x, ScoreKind::SCsi, state, bundle);
}

double ensemble_score(const std::function<double(const Image&)>& score_fn, const Image& x,
                      const AugmentationPolicy& policy, int n, Rng& rng) {
  require(n >= 1, "ensemble_score: n must be >= 1");
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    ConcreteAugmentation t = sample_augmentation(policy, rng);
    acc += score_fn(t.apply(x));
  }
  return acc / n;
}

std::vector<double> score_samples(const std::vector<Image>& xs, ScoreKind kind,
                                  const ScorerState& state, const ModelBundle& bundle) {
  state.validate();
  require(!xs.empty(), "score_samples: empty input");
  require(state.family.to_json() == bundle.family().to_json(),
          "score_samples: scorer and model were built with different shift families");
  const int n = static_cast<int>(xs.size());
  const int K = state.reference.k();

  AugmentationPolicy policy = state.policy;
  if (state.controlled_policy) policy.mode = AugMode::Controlled;
  const bool single = (kind == ScoreKind::SCon);
  const int draws = single ? 1 : state.ensemble_n;
  const int k_hi = single ? 1 : K;

  // con and cls parts accumulated separately so s_csi is exactly the sum of
  // s_con_si and s_cls_si
  std::vector<double> con_out(static_cast<std::size_t>(n), 0.0);
  std::vector<double> cls_out(static_cast<std::size_t>(n), 0.0);
  for (int k = 0; k < k_hi; ++k) {
    std::vector<double> con_k(static_cast<std::size_t>(n), 0.0);
    std::vector<double> cls_k(static_cast<std::size_t>(n), 0.0);
    for (int d = 0; d < draws; ++d) {
      std::vector<Image> queries;
      queries.reserve(static_cast<std::size_t>(n));
      for (int s = 0; s < n; ++s) {
        Image view = xs[static_cast<std::size_t>(s)];
        if (!single) {
          Rng draw_rng(derive_seed(state.seed, ((static_cast<std::uint64_t>(k) * 1000003ULL +
                                                 static_cast<std::uint64_t>(s)) *
                                                    1000003ULL +
                                                static_cast<std::uint64_t>(d))));
          ConcreteAugmentation t = sample_augmentation(policy, draw_rng);
          view = t.apply(view);
        }
        queries.push_back(apply_shift(view, state.family, k));
      }
      Mat z;
      Eigen::VectorXd cls;
      embed_with_logits(bundle, queries, k, &z, &cls);
      for (int s = 0; s < n; ++s) {
        QueryTerms t = query_terms(state, k, z.col(s), cls(s));
        double lam_con = single ? 1.0 : state.lambda_con[static_cast<std::size_t>(k)];
        con_k[static_cast<std::size_t>(s)] += lam_con * con_term(state, t);
        cls_k[static_cast<std::size_t>(s)] +=
            state.lambda_cls[static_cast<std::size_t>(k)] * t.cls;
      }
    }
    for (int s = 0; s < n; ++s) {
      con_out[static_cast<std::size_t>(s)] += con_k[static_cast<std::size_t>(s)] / draws;
      cls_out[static_cast<std::size_t>(s)] += cls_k[static_cast<std::size_t>(s)] / draws;
    }
  }
  std::vector<double> out(static_cast<std::size_t>(n), 0.0);
  for (int s = 0; s < n; ++s) {
    switch (kind) {
      case ScoreKind::SCon:
      case ScoreKind::SConSi:
        out[static_cast<std::size_t>(s)] = con_out[static_cast<std::size_t>(s)];
        break;
      case ScoreKind::SClsSi:
        out[static_cast<std::size_t>(s)] = cls_out[static_cast<std::size_t>(s)];
        break;
      case ScoreKind::SCsi:
        out[static_cast<std::size_t>(s)] =
            con_out[static_cast<std::size_t>(s)] + cls_out[static_cast<std::size_t>(s)];
        break;
    }
  }
  return out;
}

ReferenceSet build_coreset(const ReferenceSet& reference, double ratio, std::uint64_t rng_seed) {
  reference.validate();
  require(ratio > 0.0 && ratio <= 1.0, "build_coreset: ratio must lie in (0,1]");
  if (ratio == 1.0) return reference;
  const int M = reference.m();
  const int C = static_cast<int>(std::ceil(ratio * M));
  require(C >= 1, "build_coreset: ratio leaves no centers");

  ReferenceSet out;
  for (int k = 0; k < reference.k(); ++k) {
    const Mat& U = reference.unit[static_cast<std::size_t>(k)];
    const Eigen::VectorXd& norms = reference.norms[static_cast<std::size_t>(k)];
    const Eigen::VectorXd& clsv = reference.cls_values[static_cast<std::size_t>(k)];
    Rng rng(derive_seed(rng_seed, static_cast<std::uint64_t>(k)));

    // farthest-point initialization on angular distance
    std::vector<int> seeds;
    seeds.push_back(static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(M))));
    Eigen::VectorXd min_cos =
        (U.transpose() * U.col(seeds[0])).eval();
    while (static_cast<int>(seeds.size()) < C) {
      int far = 0;
      double best = 2.0;
      for (int m = 0; m < M; ++m)
        if (min_cos(m) < best) {
          best = min_cos(m);
          far = m;
        }
      seeds.push_back(far);
      min_cos = min_cos.cwiseMax((U.transpose() * U.col(far)).eval());
    }
    Mat centers(U.rows(), C);
    for (int c = 0; c < C; ++c) centers.col(c) = U.col(seeds[static_cast<std::size_t>(c)]);

    std::vector<int> assign(static_cast<std::size_t>(M), 0);
    for (int iter = 0; iter < 100; ++iter) {
      Mat sims = centers.transpose() * U;  // C x M
      for (int m = 0; m < M; ++m) {
        int best = 0;
        for (int c = 1; c < C; ++c)
          if (sims(c, m) > sims(best, m)) best = c;
        assign[static_cast<std::size_t>(m)] = best;
      }
      Mat next = Mat::Zero(U.rows(), C);
      std::vector<int> count(static_cast<std::size_t>(C), 0);
      for (int m = 0; m < M; ++m) {
        next.col(assign[static_cast<std::size_t>(m)]) += U.col(m);
        ++count[static_cast<std::size_t>(assign[static_cast<std::size_t>(m)])];
      }
      double movement = 0.0;
      for (int c = 0; c < C; ++c) {
        if (count[static_cast<std::size_t>(c)] == 0) {
          // reseed from the point farthest from every current center
          Eigen::VectorXd best_cos = (centers.transpose() * U).colwise().maxCoeff().transpose();
          int far = 0;
          double lo = 2.0;
          for (int m = 0; m < M; ++m)
            if (best_cos(m) < lo) {
              lo = best_cos(m);
              far = m;
            }
          next.col(c) = U.col(far);
          movement = 1.0;
        }
        double n = next.col(c).norm();
        if (n > 1e-12) next.col(c) /= n;
        movement = std::max(movement, 1.0 - next.col(c).dot(centers.col(c)));
      }
      centers = next;
      if (movement < 1e-6) break;
    }

    // final assignment for member statistics
    Mat sims = centers.transpose() * U;
    Eigen::VectorXd cnorm = Eigen::VectorXd::Zero(C);
    Eigen::VectorXd ccls = Eigen::VectorXd::Zero(C);
    Eigen::VectorXd cnt = Eigen::VectorXd::Zero(C);
    for (int m = 0; m < M; ++m) {
      int best = 0;
      for (int c = 1; c < C; ++c)
        if (sims(c, m) > sims(best, m)) best = c;
      cnorm(best) += norms(m);
      ccls(best) += clsv(m);
      cnt(best) += 1.0;
    }
    for (int c = 0; c < C; ++c) {
      if (cnt(c) > 0.0) {
        cnorm(c) /= cnt(c);
        ccls(c) /= cnt(c);
      } else {
        cnorm(c) = norms.mean();
        ccls(c) = clsv.mean();
      }
    }
    out.unit.push_back(std::move(centers));
    out.norms.push_back(std::move(cnorm));
    out.cls_values.push_back(std::move(ccls));
  }
  out.validate();
  return out;
}

void save_scorer(const std::string& path, const ScorerState& state, const json& run_config) {
  state.validate();
  NamedArrays arrays;
  for (int k = 0; k < state.reference.k(); ++k) {
    std::string suffix = std::to_string(k);
    arrays.add("unit." + suffix, state.reference.unit[static_cast<std::size_t>(k)]);
    arrays.add("norms." + suffix, state.reference.norms[static_cast<std::size_t>(k)]);
    arrays.add("cls." + suffix, state.reference.cls_values[static_cast<std::size_t>(k)]);
  }
  json header = {{"k", state.reference.k()},
                 {"lambda_con", state.lambda_con},
                 {"lambda_cls", state.lambda_cls},
                 {"score_mode", score_mode_name(state.score_mode)},
                 {"ensemble_n", state.ensemble_n},
                 {"controlled_policy", state.controlled_policy},
                 {"balanced", state.balanced},
                 {"policy", state.policy.to_json()},
                 {"family", state.family.to_json()},
                 {"coreset_ratio", state.coreset_ratio},
                 {"seed", state.seed},
                 {"run_config", run_config},
                 {"arrays", arrays.manifest()}};
  write_blob_file(path, "csi.scorer", kSchemaVersion, header, arrays.flatten());
}

ScorerState load_scorer(const std::string& path, json* run_config) {
  BlobFile f = read_blob_file(path, "csi.scorer", kSchemaVersion);
  NamedArrays arrays = NamedArrays::unflatten(f.header.at("arrays"), f.blob);
  ScorerState state;
  int K = f.header.at("k").get<int>();
  for (int k = 0; k < K; ++k) {
    std::string suffix = std::to_string(k);
    state.reference.unit.push_back(arrays.get("unit." + suffix));
    state.reference.norms.push_back(arrays.get("norms." + suffix).col(0));
    state.reference.cls_values.push_back(arrays.get("cls." + suffix).col(0));
  }
  state.lambda_con = f.header.at("lambda_con").get<std::vector<double>>();
  state.lambda_cls = f.header.at("lambda_cls").get<std::vector<double>>();
  state.score_mode = score_mode_from_name(f.header.at("score_mode").get<std::string>());
  state.ensemble_n = f.header.at("ensemble_n").get<int>();
  state.controlled_policy = f.header.at("controlled_policy").get<bool>();
  state.balanced = f.header.at("balanced").get<bool>();
  state.policy = AugmentationPolicy::from_json(f.header.at("policy"));
  state.family = ShiftFamily::from_json(f.header.at("family"));
  state.coreset_ratio = f.header.at("coreset_ratio").get<double>();
  state.seed = f.header.at("seed").get<std::uint64_t>();
  if (run_config) *run_config = f.header.at("run_config");
  state.validate();
  return state;
}

}  // namespace csi
