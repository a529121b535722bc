#include "csi/objectives.hpp"

#include <algorithm>
#include <cmath>

namespace csi {

using nn::Mat;
using nn::Var;

const char* loss_mode_name(LossMode m) {
  switch (m) {
    case LossMode::Simclr: return "simclr";
    case LossMode::ConSi: return "con_si";
    case LossMode::ClsSi: return "cls_si";
    case LossMode::Csi: return "csi";
    case LossMode::Supclr: return "supclr";
    case LossMode::SupCsi: return "sup_csi";
    case LossMode::Ce: return "ce";
  }
  fail("unknown loss mode");
}

LossMode loss_mode_from_name(const std::string& name) {
  if (name == "simclr") return LossMode::Simclr;
  if (name == "con_si") return LossMode::ConSi;
  if (name == "cls_si") return LossMode::ClsSi;
  if (name == "csi") return LossMode::Csi;
  if (name == "supclr") return LossMode::Supclr;
  if (name == "sup_csi") return LossMode::SupCsi;
  if (name == "ce") return LossMode::Ce;
  fail("unknown loss mode: " + name +
       " (valid: simclr, con_si, cls_si, csi, supclr, sup_csi, ce)");
}

bool loss_mode_uses_shifts(LossMode m) {
  return m == LossMode::ConSi || m == LossMode::ClsSi || m == LossMode::Csi ||
         m == LossMode::SupCsi;
}

bool loss_mode_needs_labels(LossMode m) {
  return m == LossMode::Supclr || m == LossMode::SupCsi || m == LossMode::Ce;
}

void LossConfig::validate() const {
  require(temperature > 0.0, "loss config: temperature must be positive");
  require(lambda_cls >= 0.0, "loss config: lambda must be non-negative");
  require(max_views >= 2, "loss config: view cap must be >= 2");
}

double contrastive_loss(const Eigen::VectorXd& query,
                        const std::vector<Eigen::VectorXd>& positives,
                        const std::vector<Eigen::VectorXd>& negatives, double tau) {
  require(!positives.empty(), "contrastive_loss: positive set must be non-empty");
  require(tau > 0.0, "contrastive_loss: tau must be positive");
  double qn = query.norm();
  require(qn > 1e-12, "contrastive_loss: zero-norm query");
  auto cos_sim = [&](const Eigen::VectorXd& v) {
    require(v.size() == query.size(), "contrastive_loss: dimension mismatch");
    double n = v.norm();
    require(n > 1e-12, "contrastive_loss: zero-norm candidate");
    return query.dot(v) / (qn * n);
  };
  std::vector<double> pos_s, all_s;
  for (const auto& p : positives) {
    double s = cos_sim(p) / tau;
    pos_s.push_back(s);
    all_s.push_back(s);
  }
  for (const auto& n : negatives) all_s.push_back(cos_sim(n) / tau);
  double mx = *std::max_element(all_s.begin(), all_s.end());
  double sum_all = 0.0, sum_pos = 0.0;
  for (double s : all_s) sum_all += std::exp(s - mx);
  for (double s : pos_s) sum_pos += std::exp(s - mx);
  return (std::log(sum_all) - std::log(sum_pos)) / static_cast<double>(positives.size());
}

std::vector<long> contrastive_groups(LossMode mode, int batch, int k_shifts,
                                     const std::vector<int>& labels, bool align_shift) {
  require(batch >= 1 && k_shifts >= 1, "contrastive_groups: bad batch/K");
  bool sup = (mode == LossMode::Supclr || mode == LossMode::SupCsi);
  if (sup)
    require(static_cast<int>(labels.size()) == batch,
            "contrastive_groups: supervised mode needs one label per sample");
  int k_used = loss_mode_uses_shifts(mode) ? k_shifts : 1;
  std::vector<long> groups;
  groups.reserve(static_cast<std::size_t>(2) * batch * k_used);
  for (int k = 0; k < k_used; ++k)
    for (int v = 0; v < 2; ++v)
      for (int i = 0; i < batch; ++i) {
        long g;
        if (sup) {
          long y = labels[static_cast<std::size_t>(i)];
          g = align_shift ? y : y * k_used + k;
        } else {
          g = align_shift ? i : static_cast<long>(k) * batch + i;
        }
        groups.push_back(g);
      }
  return groups;
}

nn::ContrastMasks masks_from_groups(const std::vector<long>& groups) {
  int n = static_cast<int>(groups.size());
  nn::ContrastMasks m = nn::ContrastMasks::empty(n);
  for (int j = 0; j < n; ++j)
    for (int k = 0; k < n; ++k) {
      if (j == k) continue;
      m.cand_at(j, k) = 1;
      if (groups[static_cast<std::size_t>(j)] == groups[static_cast<std::size_t>(k)])
        m.pos_at(j, k) = 1;
    }
  return m;
}

Var grouped_nt_xent(nn::Tape& tape, Var z_views, const std::vector<long>& groups, double tau) {
  require(tape.value(z_views).cols() == static_cast<long>(groups.size()),
          "grouped_nt_xent: one group id per view column required");
  Var zn = tape.l2_normalize_cols(z_views);
  Var sim = tape.gram(zn);
  return tape.grouped_contrastive(sim, masks_from_groups(groups), tau);
}

double grouped_nt_xent_value(const Mat& z_views, const std::vector<long>& groups, double tau) {
  nn::Tape tape;
  Var z = tape.leaf(z_views, false);
  return tape.value(grouped_nt_xent(tape, z, groups, tau))(0, 0);
}

LossGraph build_loss_graph(nn::Binding& bind, const ModelBundle& bundle,
                           const std::vector<Sample>& batch, const LossConfig& config,
                           const AugmentationPolicy& policy, Rng& rng, LossProbe* probe) {
  config.validate();
  policy.validate();
  require(!batch.empty(), "loss: empty batch");
  const int B = static_cast<int>(batch.size());
  const ShiftFamily& family = bundle.family();
  const int K = loss_mode_uses_shifts(config.mode) ? family.k() : 1;
  const int views_per_sample = (config.mode == LossMode::Ce) ? 1 : 2;
  const long n_views = static_cast<long>(views_per_sample) * B * K;
  require(n_views <= config.max_views,
          "loss: " + std::to_string(n_views) + " views exceed the configured cap of " +
              std::to_string(config.max_views));

  std::vector<int> labels(batch.size(), -1);
  if (loss_mode_needs_labels(config.mode))
    for (int i = 0; i < B; ++i) {
      require(batch[static_cast<std::size_t>(i)].label >= 0,
              "loss: mode " + std::string(loss_mode_name(config.mode)) +
                  " requires labeled samples");
      labels[static_cast<std::size_t>(i)] = batch[static_cast<std::size_t>(i)].label;
    }

  // view columns: k-major, then view, then sample
  const int hw = bundle.config().image_hw;
  const int ch = bundle.config().in_channels;
  std::vector<Image> views;
  views.reserve(static_cast<std::size_t>(n_views));
  std::vector<int> shift_labels;
  std::vector<int> view_class;
  for (int k = 0; k < K; ++k)
    for (int v = 0; v < views_per_sample; ++v)
      for (int i = 0; i < B; ++i) {
        const Sample& s = batch[static_cast<std::size_t>(i)];
        Image shifted = apply_shift(s.pixels, family, k);
        ConcreteAugmentation t = sample_augmentation(policy, rng);
        views.push_back(t.apply(shifted));
        shift_labels.push_back(k);
        view_class.push_back(labels[static_cast<std::size_t>(i)]);
      }

  Mat pixels = pack_batch(views, hw, ch);
  nn::Tape& tape = bind.tape();
  ModelBundle::ForwardVars fw = bundle.forward(bind, pixels);

  LossGraph out;
  out.views = static_cast<int>(n_views);

  std::vector<long> groups;
  if (config.mode != LossMode::Ce && config.mode != LossMode::ClsSi) {
    groups = contrastive_groups(config.mode, B, K, labels, config.align_shift_as_positive);
    out.con = grouped_nt_xent(tape, fw.z, groups, config.temperature);
  }

  switch (config.mode) {
    case LossMode::Simclr:
    case LossMode::ConSi:
    case LossMode::Supclr:
    case LossMode::SupCsi:
      out.total = out.con;
      break;
    case LossMode::ClsSi: {
      Var logits = bundle.shift_logits_var(bind, fw.features);
      out.cls = tape.cross_entropy_logits(logits, shift_labels);
      out.total = out.cls;
      break;
    }
    case LossMode::Csi: {
      Var logits = bundle.shift_logits_var(bind, fw.features);
      out.cls = tape.cross_entropy_logits(logits, shift_labels);
      out.total = tape.add(out.con, tape.scale(out.cls, config.lambda_cls));
      break;
    }
    case LossMode::Ce: {
      Var logits = bundle.class_logits_var(bind, fw.features);
      out.total = tape.cross_entropy_logits(logits, view_class);
      break;
    }
  }

  if (probe) {
    probe->z = tape.value(fw.z);
    probe->groups = groups;
    probe->shift_labels = shift_labels;
    probe->class_labels = view_class;
  }
  return out;
}

namespace {

double value_only(const ModelBundle& bundle, const std::vector<Sample>& batch,
                  const LossConfig& config, const AugmentationPolicy& policy, Rng& rng,
                  LossProbe* probe) {
  nn::Tape tape;
  nn::Binding bind(tape, const_cast<nn::ParamStore&>(bundle.params()), true, false);
  LossGraph g = build_loss_graph(bind, bundle, batch, config, policy, rng, probe);
  return tape.value(g.total)(0, 0);
}

void require_bound_family(const ShiftFamily& family, const ModelBundle& bundle,
                          const char* op) {
  require(family.to_json() == bundle.family().to_json(),
          std::string(op) + ": shift family does not match the one bound to the model");
}

}  // namespace

double simclr_loss(const std::vector<Sample>& batch, const AugmentationPolicy& policy,
                   const ModelBundle& bundle, double tau, Rng& rng, LossProbe* probe) {
  LossConfig cfg;
  cfg.mode = LossMode::Simclr;
  cfg.temperature = tau;
  return value_only(bundle, batch, cfg, policy, rng, probe);
}

double con_si_loss(const std::vector<Sample>& batch, const ShiftFamily& family,
                   const AugmentationPolicy& policy, const ModelBundle& bundle, double tau,
                   Rng& rng, LossProbe* probe) {
  require_bound_family(family, bundle, "con_si_loss");
  LossConfig cfg;
  cfg.mode = LossMode::ConSi;
  cfg.temperature = tau;
  return value_only(bundle, batch, cfg, policy, rng, probe);
}

double cls_si_loss(const std::vector<Sample>& shifted_views, const ModelBundle& bundle) {
  require(!shifted_views.empty(), "cls_si_loss: empty view set");
  const int K = bundle.config().num_shifts;
  std::vector<int> labels;
  for (const Sample& s : shifted_views) {
    require(s.shift_label >= 0, "cls_si_loss: every view must carry a shift label");
    require(s.shift_label < K, "cls_si_loss: shift label " + std::to_string(s.shift_label) +
                                   " out of range for K=" + std::to_string(K));
    labels.push_back(s.shift_label);
  }
  nn::Tape tape;
  nn::Binding bind(tape, const_cast<nn::ParamStore&>(bundle.params()), true, false);
  Mat pixels =
      pack_batch(pixels_of(shifted_views), bundle.config().image_hw, bundle.config().in_channels);
  ModelBundle::ForwardVars fw = bundle.forward(bind, pixels);
  Var logits = bundle.shift_logits_var(bind, fw.features);
  return tape.value(tape.cross_entropy_logits(logits, labels))(0, 0);
}

LossBreakdown csi_loss(const std::vector<Sample>& batch, const ShiftFamily& family,
                       const AugmentationPolicy& policy, const ModelBundle& bundle,
                       const LossConfig& config, Rng& rng, LossProbe* probe) {
  require(config.mode == LossMode::Csi, "csi_loss: config mode must be csi");
  require_bound_family(family, bundle, "csi_loss");
  nn::Tape tape;
  nn::Binding bind(tape, const_cast<nn::ParamStore&>(bundle.params()), true, false);
  LossGraph g = build_loss_graph(bind, bundle, batch, config, policy, rng, probe);
  LossBreakdown out;
  out.total = tape.value(g.total)(0, 0);
  out.con = tape.value(g.con)(0, 0);
  out.cls = tape.value(g.cls)(0, 0);
  return out;
}

double supclr_loss(const std::vector<Sample>& batch, const AugmentationPolicy& policy,
                   const ModelBundle& bundle, double tau, Rng& rng, LossProbe* probe) {
  LossConfig cfg;
  cfg.mode = LossMode::Supclr;
  cfg.temperature = tau;
  return value_only(bundle, batch, cfg, policy, rng, probe);
}

double sup_csi_loss(const std::vector<Sample>& batch, const ShiftFamily& family,
                    const AugmentationPolicy& policy, const ModelBundle& bundle, double tau,
                    Rng& rng, LossProbe* probe) {
  require_bound_family(family, bundle, "sup_csi_loss");
  LossConfig cfg;
  cfg.mode = LossMode::SupCsi;
  cfg.temperature = tau;
  return value_only(bundle, batch, cfg, policy, rng, probe);
}

}  // namespace csi
