#include "csi/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "csi/train.hpp"

namespace csi {

using nn::Mat;

Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
  require(logits.size() > 0, "softmax: empty logits");
  Eigen::VectorXd e = (logits.array() - logits.maxCoeff()).exp();
  return e / e.sum();
}

double confidence(const Eigen::VectorXd& prob) {
  require(prob.size() > 0, "confidence: empty probability vector");
  double sum = 0.0;
  for (long i = 0; i < prob.size(); ++i) {
    require(prob(i) >= -1e-9 && prob(i) <= 1.0 + 1e-9,
            "confidence: entry outside [0,1]");
    sum += prob(i);
  }
  require(std::abs(sum - 1.0) <= 1e-6, "confidence: probabilities do not sum to 1");
  return prob.maxCoeff();
}

namespace {

Eigen::VectorXd block_mean_logits(const ModelBundle& bundle, const std::vector<Image>& per_shift) {
  const int C = bundle.config().num_classes;
  const int K = bundle.family().k();
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(C);
  Mat logits = bundle.joint_logits(per_shift);  // K x (C*K)
  for (int k = 0; k < K; ++k) acc += logits.row(k).segment(k * C, C).transpose();
  return acc / static_cast<double>(K);
}

}  // namespace

Eigen::VectorXd csi_ens_prob(const ModelBundle& bundle, const Image& x,
                             const ShiftFamily& family) {
  require(bundle.has_joint_head(), "csi_ens_prob: model has no joint head");
  require(family.to_json() == bundle.family().to_json(),
          "csi_ens_prob: shift family does not match the one bound to the model");
  std::vector<Image> per_shift;
  per_shift.reserve(static_cast<std::size_t>(family.k()));
  for (int k = 0; k < family.k(); ++k) per_shift.push_back(apply_shift(x, family, k));
  return softmax(block_mean_logits(bundle, per_shift));
}

Eigen::VectorXd csi_ens_prob(const ModelBundle& bundle, const Image& x, const ShiftFamily& family,
                             const AugmentationPolicy& policy, int draws, Rng& rng) {
  require(bundle.has_joint_head(), "csi_ens_prob: model has no joint head");
  require(draws >= 1, "csi_ens_prob: draws must be >= 1");
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(bundle.config().num_classes);
  for (int d = 0; d < draws; ++d) {
    ConcreteAugmentation t = sample_augmentation(policy, rng);
    Image view = t.apply(x);
    std::vector<Image> per_shift;
    per_shift.reserve(static_cast<std::size_t>(family.k()));
    for (int k = 0; k < family.k(); ++k) per_shift.push_back(apply_shift(view, family, k));
    acc += block_mean_logits(bundle, per_shift);
  }
  return softmax(acc / static_cast<double>(draws));
}

int bin_index(double conf, int m_bins) {
  require(m_bins >= 1, "bins: m_bins must be >= 1");
  require(conf >= 0.0 && conf <= 1.0, "bins: confidence outside [0,1]");
  int idx = static_cast<int>(std::ceil(conf * m_bins)) - 1;
  idx = std::clamp(idx, 0, m_bins - 1);
  // settle onto the exact (m/M, (m+1)/M] interval in double arithmetic
  while (idx > 0 && conf <= static_cast<double>(idx) / m_bins) --idx;
  while (idx + 1 < m_bins && conf > static_cast<double>(idx + 1) / m_bins) ++idx;
  return idx;
}

int CalibrationBins::total() const {
  int n = 0;
  for (int c : count) n += c;
  return n;
}

double CalibrationBins::ece() const {
  int n = total();
  require(n > 0, "ece: empty bins");
  double acc = 0.0;
  for (int m = 0; m < m_bins; ++m)
    if (count[static_cast<std::size_t>(m)] > 0)
      acc += (static_cast<double>(count[static_cast<std::size_t>(m)]) / n) *
             std::abs(accuracy[static_cast<std::size_t>(m)] -
                      mean_confidence[static_cast<std::size_t>(m)]);
  return acc;
}

std::string CalibrationBins::to_table() const {
  std::ostringstream out;
  out << std::fixed << std::setprecision(4);
  out << std::left << std::setw(16) << "bin" << std::right << std::setw(8) << "n" << std::setw(10)
      << "conf" << std::setw(10) << "acc" << "\n";
  for (int m = 0; m < m_bins; ++m) {
    std::ostringstream label;
    label << std::setprecision(3) << std::fixed << "(" << static_cast<double>(m) / m_bins << ","
          << static_cast<double>(m + 1) / m_bins << "]";
    out << std::left << std::setw(16) << label.str() << std::right << std::setw(8)
        << count[static_cast<std::size_t>(m)] << std::setw(10)
        << mean_confidence[static_cast<std::size_t>(m)] << std::setw(10)
        << accuracy[static_cast<std::size_t>(m)] << "\n";
  }
  out << "ece: " << ece() << "\n";
  return out.str();
}

CalibrationBins calibration_bins(const std::vector<double>& confidences,
                                 const std::vector<int>& correct, int m_bins) {
  require(confidences.size() == correct.size(), "ece: list length mismatch");
  require(!confidences.empty(), "ece: empty input");
  require(m_bins >= 1, "ece: m_bins must be >= 1");
  CalibrationBins bins;
  bins.m_bins = m_bins;
  bins.count.assign(static_cast<std::size_t>(m_bins), 0);
  bins.mean_confidence.assign(static_cast<std::size_t>(m_bins), 0.0);
  bins.accuracy.assign(static_cast<std::size_t>(m_bins), 0.0);
  for (std::size_t i = 0; i < confidences.size(); ++i) {
    int m = bin_index(confidences[i], m_bins);
    bins.count[static_cast<std::size_t>(m)] += 1;
    bins.mean_confidence[static_cast<std::size_t>(m)] += confidences[i];
    bins.accuracy[static_cast<std::size_t>(m)] += correct[i] ? 1.0 : 0.0;
  }
  for (int m = 0; m < m_bins; ++m)
    if (bins.count[static_cast<std::size_t>(m)] > 0) {
      bins.mean_confidence[static_cast<std::size_t>(m)] /= bins.count[static_cast<std::size_t>(m)];
      bins.accuracy[static_cast<std::size_t>(m)] /= bins.count[static_cast<std::size_t>(m)];
    }
  return bins;
}

double ece(const std::vector<double>& confidences, const std::vector<int>& correct, int m_bins) {
  return calibration_bins(confidences, correct, m_bins).ece();
}

void train_linear_heads(ModelBundle& bundle, const std::vector<Sample>& train_set, HeadKind kind,
                        const HeadTrainConfig& config) {
  require(!train_set.empty(), "head training: empty training set");
  require(config.epochs >= 1 && config.batch_size >= 1 && config.lr > 0.0,
          "head training: invalid schedule");
  const int C = bundle.config().num_classes;
  require(C >= 2, "head training: model carries no class labels");
  if (kind == HeadKind::Class)
    require(bundle.has_class_head(), "head training: model has no class head");
  else
    require(bundle.has_joint_head(), "head training: model has no joint head");
  for (const Sample& s : train_set)
    require(s.label >= 0 && s.label < C, "head training: sample without a valid label");

  const int K = bundle.family().k();

  // frozen evaluation-mode features, cached once
  std::vector<Image> clean = pixels_of(train_set);
  const int n_views = static_cast<int>(train_set.size()) * (kind == HeadKind::Joint ? K : 1);
  Mat feats(bundle.feature_dim(), n_views);
  std::vector<int> labels(static_cast<std::size_t>(n_views), 0);
  int col = 0;
  const int k_hi = (kind == HeadKind::Joint) ? K : 1;
  for (int k = 0; k < k_hi; ++k) {
    std::vector<Image> views;
    views.reserve(clean.size());
    for (const Image& im : clean)
      views.push_back(kind == HeadKind::Joint ? apply_shift(im, bundle.family(), k) : im);
    Mat f = bundle.encode(views);  // B x d_f
    for (std::size_t i = 0; i < views.size(); ++i) {
      feats.col(col) = f.row(static_cast<long>(i)).transpose();
      labels[static_cast<std::size_t>(col)] =
          (kind == HeadKind::Joint) ? k * C + train_set[i].label : train_set[i].label;
      ++col;
    }
  }

  const std::string prefix = (kind == HeadKind::Class) ? "head.class." : "head.joint.";
  nn::ParamStore& store = bundle.params();
  std::vector<Mat> velocity;
  velocity.reserve(static_cast<std::size_t>(store.param_count()));
  for (int p = 0; p < store.param_count(); ++p)
    velocity.push_back(Mat::Zero(store.param(p).value.rows(), store.param(p).value.cols()));

  std::ofstream log;
  if (!config.log_path.empty()) {
    log.open(config.log_path);
    require(log.good(), "head training: cannot open log " + config.log_path);
  }

  Rng root(config.seed);
  const int B = std::min(config.batch_size, n_views);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    double progress = static_cast<double>(epoch) / config.epochs;
    double lr = config.lr;
    if (progress >= 0.6) lr *= 0.1;
    if (progress >= 0.75) lr *= 0.1;
    if (progress >= 0.9) lr *= 0.1;

    std::vector<int> order(static_cast<std::size_t>(n_views));
    for (int i = 0; i < n_views; ++i) order[static_cast<std::size_t>(i)] = i;
    Rng erng = root.child(0x68656164ULL + static_cast<std::uint64_t>(epoch));
    erng.shuffle(order);

    double epoch_loss = 0.0;
    int epoch_hits = 0;
    for (int start = 0; start < n_views; start += B) {
      int len = std::min(B, n_views - start);
      Mat x(feats.rows(), len);
      std::vector<int> y(static_cast<std::size_t>(len));
      for (int j = 0; j < len; ++j) {
        x.col(j) = feats.col(order[static_cast<std::size_t>(start + j)]);
        y[static_cast<std::size_t>(j)] = labels[static_cast<std::size_t>(order[static_cast<std::size_t>(start + j)])];
      }
      nn::Tape tape;
      nn::Binding bind(tape, store, true, false);
      nn::Var xv = tape.leaf(x, false);
      nn::Var logits = (kind == HeadKind::Class) ? bundle.class_logits_var(bind, xv)
                                                 : bundle.joint_logits_var(bind, xv);
      nn::Var loss = tape.cross_entropy_logits(logits, y);
      store.zero_grads();
      tape.backward(loss);
      bind.pull_grads();
      // restrict the update to the head: zero every other gradient
      for (int p = 0; p < store.param_count(); ++p)
        if (store.param(p).name.rfind(prefix, 0) != 0) store.param(p).grad.setZero();
      sgd_step(store, velocity, lr, config.momentum, 0.0);

      epoch_loss += tape.value(loss)(0, 0) * len;
      const Mat& lv = tape.value(logits);
      for (int j = 0; j < len; ++j) {
        long arg = 0;
        lv.col(j).maxCoeff(&arg);
        if (static_cast<int>(arg) == y[static_cast<std::size_t>(j)]) ++epoch_hits;
      }
    }
    if (log.is_open()) {
      json rec = {{"epoch", epoch},
                  {"loss", epoch_loss / n_views},
                  {"accuracy", static_cast<double>(epoch_hits) / n_views},
                  {"lr", lr}};
      log << rec.dump() << "\n";
    }
  }
}

}  // namespace csi
