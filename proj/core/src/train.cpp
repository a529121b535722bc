#include "csi/train.hpp"

#include <cmath>
#include <fstream>
#include <numeric>

namespace csi {

using nn::Mat;

void OptimConfig::validate() const {
  require(lr > 0.0, "optimizer: learning rate must be positive");
  require(momentum >= 0.0 && momentum < 1.0, "optimizer: momentum must lie in [0,1)");
  require(weight_decay >= 0.0, "optimizer: weight decay must be non-negative");
  require(warmup_epochs >= 0, "optimizer: warmup epochs must be non-negative");
}

void TrainConfig::validate() const {
  loss.validate();
  policy.validate();
  optim.validate();
  require(epochs >= 0, "train config: epochs must be non-negative");
  require(batch_size >= 2, "train config: batch size must be >= 2");
}

void sgd_step(nn::ParamStore& store, std::vector<Mat>& velocity, double lr, double momentum,
              double weight_decay) {
  require(velocity.size() == static_cast<std::size_t>(store.param_count()),
          "sgd_step: velocity buffer count mismatch");
  for (int i = 0; i < store.param_count(); ++i) {
    nn::Param& p = store.param(i);
    Mat g = p.grad;
    if (p.decay && weight_decay > 0.0) g += weight_decay * p.value;
    Mat& v = velocity[static_cast<std::size_t>(i)];
    v = momentum * v + g;
    p.value -= lr * v;
  }
}

double lr_schedule(int step, int total_steps, int warmup_steps) {
  require(total_steps > 0 && step >= 0 && step < total_steps, "lr_schedule: step out of range");
  if (warmup_steps > 0 && step < warmup_steps)
    return static_cast<double>(step + 1) / warmup_steps;
  int rest = total_steps - warmup_steps;
  if (rest <= 1) return 1.0;
  double t = static_cast<double>(step - warmup_steps) / (rest - 1);
  return 0.5 * (1.0 + std::cos(3.14159265358979323846 * t));
}

TrainResult train(ModelBundle& bundle, const std::vector<Sample>& train_set,
                  const TrainConfig& config) {
  config.validate();
  require(!train_set.empty(), "train: empty training set");
  for (const Sample& s : train_set)
    require(s.pixels.h == bundle.config().image_hw && s.pixels.w == bundle.config().image_hw &&
                s.pixels.c == bundle.config().in_channels,
            "train: sample shape does not match the model input");

  const int N = static_cast<int>(train_set.size());
  const int B = std::min(config.batch_size, N);
  int steps_per_epoch = N / B;
  if (N % B >= 2) ++steps_per_epoch;
  require(steps_per_epoch >= 1, "train: batch size leaves no usable batch");
  const int total_steps = std::max(1, config.epochs * steps_per_epoch);
  const int warmup_steps = config.optim.warmup_epochs * steps_per_epoch;

  Rng root(config.seed);
  Rng aug_rng = root.child(0x617567ULL);

  std::vector<Mat> velocity;
  for (int i = 0; i < bundle.params().param_count(); ++i)
    velocity.push_back(Mat::Zero(bundle.params().param(i).value.rows(),
                                 bundle.params().param(i).value.cols()));

  std::ofstream log;
  if (!config.log_path.empty()) {
    log.open(config.log_path);
    require(static_cast<bool>(log), "train: cannot open log " + config.log_path);
  }

  TrainResult result;
  double epoch_loss = 0.0;
  int step = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::vector<int> order(static_cast<std::size_t>(N));
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng = root.child(0x65706f63ULL + static_cast<std::uint64_t>(epoch));
    shuffle_rng.shuffle(order);

    double sum_total = 0.0, sum_con = 0.0, sum_cls = 0.0;
    int batches = 0;
    long views = 0;
    double lr = 0.0;
    for (int start = 0; start < N; start += B) {
      int len = std::min(B, N - start);
      if (len < 2) break;
      std::vector<Sample> batch;
      batch.reserve(static_cast<std::size_t>(len));
      for (int j = 0; j < len; ++j)
        batch.push_back(train_set[static_cast<std::size_t>(order[static_cast<std::size_t>(start + j)])]);

      nn::Tape tape;
      nn::Binding bind(tape, bundle.params(), true, true);
      LossGraph g = build_loss_graph(bind, bundle, batch, config.loss, config.policy, aug_rng);
      tape.backward(g.total);
      bundle.params().zero_grads();
      bind.pull_grads();

      lr = config.optim.lr * lr_schedule(std::min(step, total_steps - 1), total_steps, warmup_steps);
      sgd_step(bundle.params(), velocity, lr, config.optim.momentum, config.optim.weight_decay);

      sum_total += tape.value(g.total)(0, 0);
      if (g.con.ok()) sum_con += tape.value(g.con)(0, 0);
      if (g.cls.ok()) sum_cls += tape.value(g.cls)(0, 0);
      views += g.views;
      ++batches;
      ++step;
    }
    epoch_loss = sum_total / std::max(1, batches);
    if (log.is_open()) {
      json rec = {{"epoch", epoch},
                  {"loss", epoch_loss},
                  {"con", sum_con / std::max(1, batches)},
                  {"cls", sum_cls / std::max(1, batches)},
                  {"lr", lr},
                  {"views", views}};
      log << rec.dump() << "\n";
    }
  }
  result.steps = step;
  result.final_loss = epoch_loss;
  return result;
}

}  // namespace csi
