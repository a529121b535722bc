#include "csi/nn/graph.hpp"

#include <cmath>
#include <memory>

namespace csi::nn {

ConvPlan make_conv_plan(int cin, int h, int w, int kh, int kw, int stride, int pad) {
  require(cin > 0 && h > 0 && w > 0 && kh > 0 && kw > 0 && stride > 0 && pad >= 0,
          "make_conv_plan: bad geometry");
  ConvPlan p;
  p.cin = cin; p.h = h; p.w = w;
  p.kh = kh; p.kw = kw; p.stride = stride; p.pad = pad;
  p.oh = (h + 2 * pad - kh) / stride + 1;
  p.ow = (w + 2 * pad - kw) / stride + 1;
  require(p.oh > 0 && p.ow > 0, "make_conv_plan: empty output");
  p.gather.assign(static_cast<std::size_t>(p.rows()) * p.cols(), -1);
  for (int ci = 0; ci < cin; ++ci)
    for (int ky = 0; ky < kh; ++ky)
      for (int kx = 0; kx < kw; ++kx) {
        int r = (ci * kh + ky) * kw + kx;
        for (int oy = 0; oy < p.oh; ++oy)
          for (int ox = 0; ox < p.ow; ++ox) {
            int y = oy * stride + ky - pad;
            int x = ox * stride + kx - pad;
            if (y < 0 || y >= h || x < 0 || x >= w) continue;
            p.gather[static_cast<std::size_t>(r) * p.cols() + oy * p.ow + ox] =
                (ci * h + y) * w + x;
          }
      }
  return p;
}

ContrastMasks ContrastMasks::empty(int n) {
  ContrastMasks m;
  m.n = n;
  m.cand.assign(static_cast<std::size_t>(n) * n, 0);
  m.pos.assign(static_cast<std::size_t>(n) * n, 0);
  return m;
}

Var Tape::push(Mat value, bool requires_grad, std::function<void(Tape&)> backward) {
  Node nd;
  nd.value = std::move(value);
  nd.requires_grad = requires_grad;
  if (requires_grad) nd.grad = Mat::Zero(nd.value.rows(), nd.value.cols());
  nd.backward = std::move(backward);
  nodes_.push_back(std::move(nd));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Tape::Node& Tape::node(Var v) {
  require(v.ok() && v.idx < static_cast<int>(nodes_.size()), "tape: invalid var");
  return nodes_[static_cast<std::size_t>(v.idx)];
}

const Tape::Node& Tape::node(Var v) const {
  require(v.ok() && v.idx < static_cast<int>(nodes_.size()), "tape: invalid var");
  return nodes_[static_cast<std::size_t>(v.idx)];
}

const Mat& Tape::value(Var v) const { return node(v).value; }

const Mat& Tape::grad(Var v) const {
  const Node& nd = node(v);
  require(nd.requires_grad, "tape: node does not carry a gradient");
  return nd.grad;
}

bool Tape::has_grad(Var v) const { return node(v).requires_grad; }

Var Tape::leaf(const Mat& value, bool requires_grad) {
  return push(value, requires_grad, nullptr);
}

Var Tape::matmul(Var a, Var b) {
  const Mat& A = value(a);
  const Mat& B = value(b);
  require(A.cols() == B.rows(), "matmul: inner dimension mismatch");
  bool rg = needs(a) || needs(b);
  int ai = a.idx, bi = b.idx;
  Var out = push(A * B, rg, nullptr);
  int oi = out.idx;
  if (rg)
    nodes_[oi].backward = [ai, bi, oi](Tape& t) {
      const Mat& g = t.nodes_[oi].grad;
      if (t.nodes_[ai].requires_grad) t.grad_ref(ai) += g * t.nodes_[bi].value.transpose();
      if (t.nodes_[bi].requires_grad) t.grad_ref(bi) += t.nodes_[ai].value.transpose() * g;
    };
  return out;
}

Var Tape::add(Var a, Var b) {
  const Mat& A = value(a);
  const Mat& B = value(b);
  require(A.rows() == B.rows() && A.cols() == B.cols(), "add: shape mismatch");
  bool rg = needs(a) || needs(b);
  int ai = a.idx, bi = b.idx;
  Var out = push(A + B, rg, nullptr);
  int oi = out.idx;
  if (rg)
    nodes_[oi].backward = [ai, bi, oi](Tape& t) {
      const Mat& g = t.nodes_[oi].grad;
      if (t.nodes_[ai].requires_grad) t.grad_ref(ai) += g;
      if (t.nodes_[bi].requires_grad) t.grad_ref(bi) += g;
    };
  return out;
}

Var Tape::scale(Var a, double c) {
  bool rg = needs(a);
  int ai = a.idx;
  Var out = push(value(a) * c, rg, nullptr);
  int oi = out.idx;
  if (rg)
    nodes_[oi].backward = [ai, oi, c](Tape& t) {
      t.grad_ref(ai) += c * t.nodes_[oi].grad;
    };
  return out;
}

Var Tape::add_bias(Var x, Var b) {
  const Mat& X = value(x);
  const Mat& B = value(b);
  require(B.cols() == 1 && B.rows() == X.rows(), "add_bias: bias must be rows(x) x 1");
  bool rg = needs(x) || needs(b);
  int xi = x.idx, bi = b.idx;
  Var out = push(X.colwise() + B.col(0), rg, nullptr);
  int oi = out.idx;
  if (rg)
    nodes_[oi].backward = [xi, bi, oi](Tape& t) {
      const Mat& g = t.nodes_[oi].grad;
      if (t.nodes_[xi].requires_grad) t.grad_ref(xi) += g;
      if (t.nodes_[bi].requires_grad) t.grad_ref(bi) += g.rowwise().sum();
    };
  return out;
}

Var Tape::relu(Var x) {
  const Mat& X = value(x);
  bool rg = needs(x);
  int xi = x.idx;
  Var out = push(X.cwiseMax(0.0), rg, nullptr);
  int oi = out.idx;
  if (rg)
    nodes_[oi].backward = [xi, oi](Tape& t) {
      const Mat& X = t.nodes_[xi].value;
      t.grad_ref(xi) += (X.array() > 0.0).cast<double>().matrix().cwiseProduct(t.nodes_[oi].grad);
    };
  return out;
}

Var Tape::conv2d(Var x, Var w, const ConvPlan& plan) {
  const Mat& X = value(x);
  const Mat& W = value(w);
  require(X.rows() == static_cast<long>(plan.cin) * plan.h * plan.w,
          "conv2d: input rows do not match plan");
  require(W.cols() == plan.rows(), "conv2d: weight cols must equal cin*kh*kw");
  const int B = static_cast<int>(X.cols());
  const int P = plan.cols();
  const int R = plan.rows();
  const int cout = static_cast<int>(W.rows());

  auto col = std::make_shared<Mat>(R, static_cast<long>(P) * B);
  col->setZero();
  for (int b = 0; b < B; ++b) {
    const double* src = X.col(b).data();
    for (int r = 0; r < R; ++r) {
      const int* gv = plan.gather.data() + static_cast<std::size_t>(r) * P;
      double* dst = col->data() + (static_cast<std::size_t>(b) * P) * R + r;
      // col is column-major: entry (r, b*P+p) at dst + p*R
      for (int p = 0; p < P; ++p)
        if (gv[p] >= 0) dst[static_cast<std::size_t>(p) * R] = src[gv[p]];
    }
  }
  Mat ycol = W * (*col);  // cout x (P*B)
  Mat Y(static_cast<long>(cout) * P, B);
  for (int b = 0; b < B; ++b)
    for (int co = 0; co < cout; ++co)
      for (int p = 0; p < P; ++p) Y(static_cast<long>(co) * P + p, b) = ycol(co, static_cast<long>(b) * P + p);

  bool rg = needs(x) || needs(w);
  int xi = x.idx, wi = w.idx;
  const ConvPlan* pp = &plan;
  Var out = push(std::move(Y), rg, nullptr);
  int oi = out.idx;
  if (rg)
    nodes_[oi].backward = [xi, wi, oi, col, pp, B, P, R, cout](Tape& t) {
      const Mat& g = t.nodes_[oi].grad;
      Mat gcol(cout, static_cast<long>(P) * B);
      for (int b = 0; b < B; ++b)
        for (int co = 0; co < cout; ++co)
          for (int p = 0; p < P; ++p)
            gcol(co, static_cast<long>(b) * P + p) = g(static_cast<long>(co) * P + p, b);
      if (t.nodes_[wi].requires_grad) t.grad_ref(wi) += gcol * col->transpose();
      if (t.nodes_[xi].requires_grad) {
        Mat dcol = t.nodes_[wi].value.transpose() * gcol;  // R x (P*B)
        Mat& gx = t.grad_ref(xi);
        for (int b = 0; b < B; ++b) {
          double* dst = gx.col(b).data();
          for (int r = 0; r < R; ++r) {
            const int* gv = pp->gather.data() + static_cast<std::size_t>(r) * P;
            const double* src = dcol.data() + (static_cast<std::size_t>(b) * P) * R + r;
            for (int p = 0; p < P; ++p)
              if (gv[p] >= 0) dst[gv[p]] += src[static_cast<std::size_t>(p) * R];
          }
        }
      }
    };
  return out;
}

Var Tape::batchnorm(Var x, Var gamma, Var beta, int channels, int spatial, bool training,
                    const Mat& running_mean, const Mat& running_var, Mat* batch_mean,
                    Mat* batch_var, double eps) {
  const Mat& X = value(x);
  require(X.rows() == static_cast<long>(channels) * spatial, "batchnorm: rows != channels*spatial");
  require(value(gamma).rows() == channels && value(gamma).cols() == 1, "batchnorm: gamma shape");
  require(value(beta).rows() == channels && value(beta).cols() == 1, "batchnorm: beta shape");
  const int B = static_cast<int>(X.cols());
  const long N = static_cast<long>(spatial) * B;

  Mat mu(channels, 1), var(channels, 1);
  if (training) {
    require(N > 1, "batchnorm: need more than one value per channel in training mode");
    for (int ch = 0; ch < channels; ++ch) {
      double s = 0.0, s2 = 0.0;
      for (int b = 0; b < B; ++b)
        for (int p = 0; p < spatial; ++p) {
          double v = X(static_cast<long>(ch) * spatial + p, b);
          s += v;
          s2 += v * v;
        }
      double m = s / static_cast<double>(N);
      mu(ch, 0) = m;
      var(ch, 0) = std::max(0.0, s2 / static_cast<double>(N) - m * m);
    }
    if (batch_mean) *batch_mean = mu;
    if (batch_var) *batch_var = var;
  } else {
    require(running_mean.rows() == channels && running_var.rows() == channels,
            "batchnorm: running stats shape");
    mu = running_mean;
    var = running_var;
  }

  Mat inv_std(channels, 1);
  for (int ch = 0; ch < channels; ++ch) inv_std(ch, 0) = 1.0 / std::sqrt(var(ch, 0) + eps);

  auto xhat = std::make_shared<Mat>(X.rows(), X.cols());
  Mat Y(X.rows(), X.cols());
  const Mat& G = value(gamma);
  const Mat& Bt = value(beta);
  for (int ch = 0; ch < channels; ++ch) {
    double m = mu(ch, 0), is = inv_std(ch, 0), gm = G(ch, 0), bt = Bt(ch, 0);
    for (int b = 0; b < B; ++b)
      for (int p = 0; p < spatial; ++p) {
        long r = static_cast<long>(ch) * spatial + p;
        double xh = (X(r, b) - m) * is;
        (*xhat)(r, b) = xh;
        Y(r, b) = gm * xh + bt;
      }
  }

  bool rg = needs(x) || needs(gamma) || needs(beta);
  int xi = x.idx, gi = gamma.idx, bi = beta.idx;
  Var out = push(std::move(Y), rg, nullptr);
  int oi = out.idx;
  if (rg)
    nodes_[oi].backward = [xi, gi, bi, oi, xhat, inv_std, channels, spatial, B, N,
                           training](Tape& t) {
      const Mat& g = t.nodes_[oi].grad;
      const Mat& G = t.nodes_[gi].value;
      for (int ch = 0; ch < channels; ++ch) {
        double gm = G(ch, 0), is = inv_std(ch, 0);
        double sum_g = 0.0, sum_gx = 0.0;
        for (int b = 0; b < B; ++b)
          for (int p = 0; p < spatial; ++p) {
            long r = static_cast<long>(ch) * spatial + p;
            sum_g += g(r, b);
            sum_gx += g(r, b) * (*xhat)(r, b);
          }
        if (t.nodes_[gi].requires_grad) t.grad_ref(gi)(ch, 0) += sum_gx;
        if (t.nodes_[bi].requires_grad) t.grad_ref(bi)(ch, 0) += sum_g;
        if (t.nodes_[xi].requires_grad) {
          Mat& gx = t.grad_ref(xi);
          if (training) {
            double invN = 1.0 / static_cast<double>(N);
            for (int b = 0; b < B; ++b)
              for (int p = 0; p < spatial; ++p) {
                long r = static_cast<long>(ch) * spatial + p;
                gx(r, b) += gm * is * (g(r, b) - invN * sum_g - invN * (*xhat)(r, b) * sum_gx);
              }
          } else {
            for (int b = 0; b < B; ++b)
              for (int p = 0; p < spatial; ++p) {
                long r = static_cast<long>(ch) * spatial + p;
                gx(r, b) += gm * is * g(r, b);
              }
          }
        }
      }
    };
  return out;
}

Var Tape::avgpool2(Var x, int channels, int h, int w) {
  const Mat& X = value(x);
  require(h % 2 == 0 && w % 2 == 0, "avgpool2: extents must be even");
  require(X.rows() == static_cast<long>(channels) * h * w, "avgpool2: rows mismatch");
  const int B = static_cast<int>(X.cols());
  const int oh = h / 2, ow = w / 2;
  Mat Y(static_cast<long>(channels) * oh * ow, B);
  for (int b = 0; b < B; ++b)
    for (int ch = 0; ch < channels; ++ch)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          long base = static_cast<long>(ch) * h * w;
          double v = X(base + (2 * oy) * w + 2 * ox, b) + X(base + (2 * oy) * w + 2 * ox + 1, b) +
                     X(base + (2 * oy + 1) * w + 2 * ox, b) +
                     X(base + (2 * oy + 1) * w + 2 * ox + 1, b);
          Y(static_cast<long>(ch) * oh * ow + oy * ow + ox, b) = 0.25 * v;
        }
  bool rg = needs(x);
  int xi = x.idx;
  Var out = push(std::move(Y), rg, nullptr);
  int oi = out.idx;
  if (rg)
    nodes_[oi].backward = [xi, oi, channels, h, w, B, oh, ow](Tape& t) {
      const Mat& g = t.nodes_[oi].grad;
      Mat& gx = t.grad_ref(xi);
      for (int b = 0; b < B; ++b)
        for (int ch = 0; ch < channels; ++ch)
          for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox) {
              double gv = 0.25 * g(static_cast<long>(ch) * oh * ow + oy * ow + ox, b);
              long base = static_cast<long>(ch) * h * w;
              gx(base + (2 * oy) * w + 2 * ox, b) += gv;
              gx(base + (2 * oy) * w + 2 * ox + 1, b) += gv;
              gx(base + (2 * oy + 1) * w + 2 * ox, b) += gv;
              gx(base + (2 * oy + 1) * w + 2 * ox + 1, b) += gv;
            }
    };
  return out;
}

Var Tape::global_avgpool(Var x, int channels, int spatial) {
  const Mat& X = value(x);
  require(X.rows() == static_cast<long>(channels) * spatial, "global_avgpool: rows mismatch");
  const int B = static_cast<int>(X.cols());
  Mat Y(channels, B);
  for (int b = 0; b < B; ++b)
    for (int ch = 0; ch < channels; ++ch) {
      double s = 0.0;
      for (int p = 0; p < spatial; ++p) s += X(static_cast<long>(ch) * spatial + p, b);
      Y(ch, b) = s / spatial;
    }
  bool rg = needs(x);
  int xi = x.idx;
  Var out = push(std::move(Y), rg, nullptr);
  int oi = out.idx;
  if (rg)
    nodes_[oi].backward = [xi, oi, channels, spatial, B](Tape& t) {
      const Mat& g = t.nodes_[oi].grad;
      Mat& gx = t.grad_ref(xi);
      for (int b = 0; b < B; ++b)
        for (int ch = 0; ch < channels; ++ch) {
          double gv = g(ch, b) / spatial;
          for (int p = 0; p < spatial; ++p) gx(static_cast<long>(ch) * spatial + p, b) += gv;
        }
    };
  return out;
}

Var Tape::l2_normalize_cols(Var x) {
  const Mat& X = value(x);
  const int B = static_cast<int>(X.cols());
  Mat Y(X.rows(), B);
  std::vector<double> norms(static_cast<std::size_t>(B));
  for (int b = 0; b < B; ++b) {
    double n = X.col(b).norm();
    require(n > 1e-12, "l2_normalize_cols: zero-norm column");
    norms[static_cast<std::size_t>(b)] = n;
    Y.col(b) = X.col(b) / n;
  }
  bool rg = needs(x);
  int xi = x.idx;
  Var out = push(std::move(Y), rg, nullptr);
  int oi = out.idx;
  if (rg)
    nodes_[oi].backward = [xi, oi, norms, B](Tape& t) {
      const Mat& g = t.nodes_[oi].grad;
      const Mat& Y = t.nodes_[oi].value;
      Mat& gx = t.grad_ref(xi);
      for (int b = 0; b < B; ++b) {
        double dot = Y.col(b).dot(g.col(b));
        gx.col(b) += (g.col(b) - dot * Y.col(b)) / norms[static_cast<std::size_t>(b)];
      }
    };
  return out;
}

Var Tape::gram(Var z) {
  const Mat& Z = value(z);
  bool rg = needs(z);
  int zi = z.idx;
  Var out = push(Z.transpose() * Z, rg, nullptr);
  int oi = out.idx;
  if (rg)
    nodes_[oi].backward = [zi, oi](Tape& t) {
      const Mat& g = t.nodes_[oi].grad;
      t.grad_ref(zi) += t.nodes_[zi].value * (g + g.transpose());
    };
  return out;
}

Var Tape::grouped_contrastive(Var sim, const ContrastMasks& masks, double tau) {
  const Mat& S = value(sim);
  const int n = masks.n;
  require(S.rows() == n && S.cols() == n, "grouped_contrastive: sim shape mismatch");
  require(tau > 0.0, "grouped_contrastive: tau must be positive");

  double total = 0.0;
  int active = 0;
  for (int j = 0; j < n; ++j) {
    int npos = 0;
    double mx = -1e300;
    for (int k = 0; k < n; ++k) {
      if (!masks.cand_at(j, k)) continue;
      mx = std::max(mx, S(j, k) / tau);
      if (masks.pos_at(j, k)) ++npos;
    }
    if (npos == 0) continue;
    double sum_all = 0.0, sum_pos = 0.0;
    for (int k = 0; k < n; ++k) {
      if (!masks.cand_at(j, k)) continue;
      double e = std::exp(S(j, k) / tau - mx);
      sum_all += e;
      if (masks.pos_at(j, k)) sum_pos += e;
    }
    total += (std::log(sum_all) - std::log(sum_pos)) / npos;
    ++active;
  }
  Mat Y(1, 1);
  Y(0, 0) = active > 0 ? total / active : 0.0;

  bool rg = needs(sim);
  int si = sim.idx;
  ContrastMasks mcopy = masks;
  Var out = push(std::move(Y), rg, nullptr);
  int oi = out.idx;
  if (rg && active > 0)
    nodes_[oi].backward = [si, oi, mcopy = std::move(mcopy), tau, n, active](Tape& t) {
      double g = t.nodes_[oi].grad(0, 0);
      const Mat& S = t.nodes_[si].value;
      Mat& gs = t.grad_ref(si);
      for (int j = 0; j < n; ++j) {
        int npos = 0;
        double mx = -1e300;
        for (int k = 0; k < n; ++k) {
          if (!mcopy.cand_at(j, k)) continue;
          mx = std::max(mx, S(j, k) / tau);
          if (mcopy.pos_at(j, k)) ++npos;
        }
        if (npos == 0) continue;
        double sum_all = 0.0, sum_pos = 0.0;
        for (int k = 0; k < n; ++k) {
          if (!mcopy.cand_at(j, k)) continue;
          double e = std::exp(S(j, k) / tau - mx);
          sum_all += e;
          if (mcopy.pos_at(j, k)) sum_pos += e;
        }
        double coef = g / (static_cast<double>(active) * npos * tau);
        for (int k = 0; k < n; ++k) {
          if (!mcopy.cand_at(j, k)) continue;
          double e = std::exp(S(j, k) / tau - mx);
          double d = e / sum_all;
          if (mcopy.pos_at(j, k)) d -= e / sum_pos;
          gs(j, k) += coef * d;
        }
      }
    };
  return out;
}

Var Tape::cross_entropy_logits(Var logits, const std::vector<int>& labels) {
  const Mat& L = value(logits);
  const int n = static_cast<int>(L.cols());
  const int K = static_cast<int>(L.rows());
  require(static_cast<int>(labels.size()) == n, "cross_entropy_logits: label count mismatch");
  require(n > 0, "cross_entropy_logits: empty batch");

  auto soft = std::make_shared<Mat>(K, n);
  double total = 0.0;
  for (int j = 0; j < n; ++j) {
    int y = labels[static_cast<std::size_t>(j)];
    require(y >= 0 && y < K, "cross_entropy_logits: label out of range");
    double mx = L.col(j).maxCoeff();
    double sum = 0.0;
    for (int k = 0; k < K; ++k) sum += std::exp(L(k, j) - mx);
    for (int k = 0; k < K; ++k) (*soft)(k, j) = std::exp(L(k, j) - mx) / sum;
    total += mx + std::log(sum) - L(y, j);
  }
  Mat Y(1, 1);
  Y(0, 0) = total / n;

  bool rg = needs(logits);
  int li = logits.idx;
  std::vector<int> lab = labels;
  Var out = push(std::move(Y), rg, nullptr);
  int oi = out.idx;
  if (rg)
    nodes_[oi].backward = [li, oi, soft, lab = std::move(lab), n](Tape& t) {
      double g = t.nodes_[oi].grad(0, 0) / n;
      Mat& gl = t.grad_ref(li);
      gl += g * (*soft);
      for (int j = 0; j < n; ++j) gl(lab[static_cast<std::size_t>(j)], j) -= g;
    };
  return out;
}

void Tape::backward(Var loss) {
  Node& top = node(loss);
  require(top.value.rows() == 1 && top.value.cols() == 1, "backward: loss must be scalar");
  require(top.requires_grad, "backward: loss does not require grad");
  top.grad(0, 0) = 1.0;
  for (int i = loss.idx; i >= 0; --i) {
    Node& nd = nodes_[static_cast<std::size_t>(i)];
    if (nd.requires_grad && nd.backward) nd.backward(*this);
  }
}

double gradcheck(const std::function<double(const std::vector<Mat>&, std::vector<Mat>*)>& f,
                 std::vector<Mat> params, double step, int max_coords_per_param, Rng& rng) {
  std::vector<Mat> grads(params.size());
  f(params, &grads);
  for (std::size_t p = 0; p < params.size(); ++p)
    require(grads[p].rows() == params[p].rows() && grads[p].cols() == params[p].cols(),
            "gradcheck: gradient shape mismatch");
  double worst = 0.0;
  for (std::size_t p = 0; p < params.size(); ++p) {
    long total = params[p].size();
    int ncheck = static_cast<int>(std::min<long>(total, max_coords_per_param));
    for (int t = 0; t < ncheck; ++t) {
      long idx = static_cast<long>(rng.uniform_index(static_cast<std::uint64_t>(total)));
      double orig = params[p].data()[idx];
      params[p].data()[idx] = orig + step;
      double fp = f(params, nullptr);
      params[p].data()[idx] = orig - step;
      double fm = f(params, nullptr);
      params[p].data()[idx] = orig;
      double numeric = (fp - fm) / (2.0 * step);
      double analytic = grads[p].data()[idx];
      double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-8});
      worst = std::max(worst, std::abs(numeric - analytic) / denom);
    }
  }
  return worst;
}

}  // namespace csi::nn
