#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <vector>

#include "csi/common.hpp"

namespace csi::nn {

using Mat = Eigen::MatrixXd;

class Tape;

/// Handle into a Tape node. Activations are laid out feature-major with one
/// column per sample; image features use channel-major (C*H*W) rows.
struct Var {
  int idx = -1;
  bool ok() const { return idx >= 0; }
};

/// Gather plan for conv2d im2col: source flat index per (patch row, output
/// position), -1 for zero padding.
struct ConvPlan {
  int cin = 0, h = 0, w = 0;
  int kh = 0, kw = 0, stride = 0, pad = 0;
  int oh = 0, ow = 0;
  std::vector<int> gather;  // (cin*kh*kw) * (oh*ow)
  int rows() const { return cin * kh * kw; }
  int cols() const { return oh * ow; }
};

ConvPlan make_conv_plan(int cin, int h, int w, int kh, int kw, int stride, int pad);

/// Positive/candidate masks for the grouped contrastive loss. Entry (j,k)
/// refers to anchor j and candidate k in the similarity matrix.
struct ContrastMasks {
  int n = 0;
  std::vector<std::uint8_t> cand;  // n*n
  std::vector<std::uint8_t> pos;   // n*n, subset of cand
  std::uint8_t& cand_at(int j, int k) { return cand[static_cast<std::size_t>(j) * n + k]; }
  std::uint8_t& pos_at(int j, int k) { return pos[static_cast<std::size_t>(j) * n + k]; }
  std::uint8_t cand_at(int j, int k) const { return cand[static_cast<std::size_t>(j) * n + k]; }
  std::uint8_t pos_at(int j, int k) const { return pos[static_cast<std::size_t>(j) * n + k]; }
  static ContrastMasks empty(int n);
};

/// Single-use reverse-mode tape over dense double matrices.
class Tape {
 public:
  Var leaf(const Mat& value, bool requires_grad);

  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  Var scale(Var a, double c);
  Var add_bias(Var x, Var b);  // b: m x 1, broadcast across columns
  Var relu(Var x);
  Var conv2d(Var x, Var w, const ConvPlan& plan);
  Var batchnorm(Var x, Var gamma, Var beta, int channels, int spatial, bool training,
                const Mat& running_mean, const Mat& running_var, Mat* batch_mean,
                Mat* batch_var, double eps = 1e-5);
  Var avgpool2(Var x, int channels, int h, int w);
  Var global_avgpool(Var x, int channels, int spatial);
  Var l2_normalize_cols(Var x);
  Var gram(Var z);  // z: d x n -> z^T z, n x n

  /// Mean over anchors with at least one positive of
  ///   (logsumexp_{k in cand_j} s_jk/tau - logsumexp_{k in pos_j} s_jk/tau) / |pos_j|.
  /// Anchors without positives are skipped and the mean renormalized; returns
  /// exact zero if no anchor has positives.
  Var grouped_contrastive(Var sim, const ContrastMasks& masks, double tau);

  /// Mean over columns of (logsumexp(logits_col) - logits_col[label]).
  Var cross_entropy_logits(Var logits, const std::vector<int>& labels);

  void backward(Var loss);

  const Mat& value(Var v) const;
  const Mat& grad(Var v) const;
  bool has_grad(Var v) const;
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Mat value;
    Mat grad;
    bool requires_grad = false;
    std::function<void(Tape&)> backward;
  };

  Var push(Mat value, bool requires_grad, std::function<void(Tape&)> backward);
  Node& node(Var v);
  const Node& node(Var v) const;
  Mat& grad_ref(int idx) { return nodes_[static_cast<std::size_t>(idx)].grad; }
  bool needs(Var v) const { return node(v).requires_grad; }

  std::vector<Node> nodes_;
};

/// Central-difference gradient check helper: returns max relative error over
/// all checked coordinates. `f` must rebuild the graph from scratch.
double gradcheck(const std::function<double(const std::vector<Mat>&, std::vector<Mat>*)>& f,
                 std::vector<Mat> params, double step, int max_coords_per_param, Rng& rng);

}  // namespace csi::nn
