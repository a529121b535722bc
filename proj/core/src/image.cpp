#include "csi/image.hpp"

#include <algorithm>
#include <cmath>

namespace csi {

const char* resize_kernel_name(ResizeKernel k) {
  switch (k) {
    case ResizeKernel::Nearest: return "nearest";
    case ResizeKernel::Bilinear: return "bilinear";
    case ResizeKernel::Triangle: return "triangle";
  }
  fail("unknown resize kernel");
}

ResizeKernel resize_kernel_from_name(const std::string& name) {
  if (name == "nearest") return ResizeKernel::Nearest;
  if (name == "bilinear") return ResizeKernel::Bilinear;
  if (name == "triangle") return ResizeKernel::Triangle;
  fail("unknown resize kernel: " + name);
}

namespace {

Image resize_nearest(const Image& src, int oh, int ow) {
  Image out(oh, ow, src.c);
  for (int y = 0; y < oh; ++y) {
    int sy = std::min(src.h - 1, static_cast<int>((y + 0.5) * src.h / oh));
    for (int x = 0; x < ow; ++x) {
      int sx = std::min(src.w - 1, static_cast<int>((x + 0.5) * src.w / ow));
      for (int ch = 0; ch < src.c; ++ch) out.at(y, x, ch) = src.at(sy, sx, ch);
    }
  }
  return out;
}

struct TapPlan {
  std::vector<int> offsets;      // per output coordinate: first source index
  std::vector<int> counts;       // taps per output coordinate
  std::vector<double> weights;   // flattened tap weights
  std::vector<int> starts;       // prefix offsets into weights
};

TapPlan plan_axis(int in_n, int out_n, bool antialias) {
  TapPlan p;
  double scale = static_cast<double>(in_n) / out_n;
  double support = (antialias && scale > 1.0) ? scale : 1.0;
  p.offsets.resize(out_n);
  p.counts.resize(out_n);
  p.starts.resize(out_n + 1, 0);
  for (int o = 0; o < out_n; ++o) {
    double center = (o + 0.5) * scale;
    int lo = static_cast<int>(std::floor(center - support + 0.5));
    int hi = static_cast<int>(std::floor(center + support + 0.5));
    lo = std::max(lo, 0);
    hi = std::min(hi, in_n);
    if (hi <= lo) { lo = std::min(in_n - 1, std::max(0, lo)); hi = lo + 1; }
    double wsum = 0.0;
    std::vector<double> wt(hi - lo);
    for (int i = lo; i < hi; ++i) {
      double d = std::abs((i + 0.5 - center) / support);
      double wv = d < 1.0 ? 1.0 - d : 0.0;
      wt[i - lo] = wv;
      wsum += wv;
    }
    if (wsum <= 0.0) {  // degenerate footprint, fall back to nearest tap
      std::fill(wt.begin(), wt.end(), 0.0);
      int nearest = std::min(hi - lo - 1, std::max(0, static_cast<int>(center - lo)));
      wt[nearest] = 1.0;
      wsum = 1.0;
    }
    p.offsets[o] = lo;
    p.counts[o] = hi - lo;
    for (double wv : wt) p.weights.push_back(wv / wsum);
    p.starts[o + 1] = static_cast<int>(p.weights.size());
  }
  return p;
}

Image resize_triangle(const Image& src, int oh, int ow, bool antialias) {
  TapPlan py = plan_axis(src.h, oh, antialias);
  TapPlan px = plan_axis(src.w, ow, antialias);
  // horizontal pass then vertical pass
  Image mid(src.h, ow, src.c);
  for (int y = 0; y < src.h; ++y)
    for (int x = 0; x < ow; ++x) {
      int base = px.starts[x];
      for (int ch = 0; ch < src.c; ++ch) {
        double acc = 0.0;
        for (int t = 0; t < px.counts[x]; ++t)
          acc += px.weights[base + t] * src.at(y, px.offsets[x] + t, ch);
        mid.at(y, x, ch) = acc;
      }
    }
  Image out(oh, ow, src.c);
  for (int y = 0; y < oh; ++y) {
    int base = py.starts[y];
    for (int x = 0; x < ow; ++x)
      for (int ch = 0; ch < src.c; ++ch) {
        double acc = 0.0;
        for (int t = 0; t < py.counts[y]; ++t)
          acc += py.weights[base + t] * mid.at(py.offsets[y] + t, x, ch);
        out.at(y, x, ch) = acc;
      }
  }
  return out;
}

}  // namespace

Image resize(const Image& src, int out_h, int out_w, ResizeKernel kernel) {
  require(src.h > 0 && src.w > 0 && src.c > 0, "resize: empty source image");
  require(out_h > 0 && out_w > 0, "resize: output extent must be positive");
  if (out_h == src.h && out_w == src.w) return src;
  switch (kernel) {
    case ResizeKernel::Nearest: return resize_nearest(src, out_h, out_w);
    case ResizeKernel::Bilinear: return resize_triangle(src, out_h, out_w, false);
    case ResizeKernel::Triangle: return resize_triangle(src, out_h, out_w, true);
  }
  fail("unknown resize kernel");
}

Image crop(const Image& src, int y0, int x0, int ch_, int cw_) {
  require(y0 >= 0 && x0 >= 0 && ch_ > 0 && cw_ > 0 && y0 + ch_ <= src.h && x0 + cw_ <= src.w,
          "crop: rectangle out of bounds");
  Image out(ch_, cw_, src.c);
  for (int y = 0; y < ch_; ++y)
    for (int x = 0; x < cw_; ++x)
      for (int k = 0; k < src.c; ++k) out.at(y, x, k) = src.at(y0 + y, x0 + x, k);
  return out;
}

Image hflip(const Image& src) {
  Image out(src.h, src.w, src.c);
  for (int y = 0; y < src.h; ++y)
    for (int x = 0; x < src.w; ++x)
      for (int k = 0; k < src.c; ++k) out.at(y, x, k) = src.at(y, src.w - 1 - x, k);
  return out;
}

Image rot90(const Image& src, int k) {
  k = ((k % 4) + 4) % 4;
  if (k == 0) return src;
  if (k == 2) {
    Image out(src.h, src.w, src.c);
    for (int y = 0; y < src.h; ++y)
      for (int x = 0; x < src.w; ++x)
        for (int ch = 0; ch < src.c; ++ch)
          out.at(y, x, ch) = src.at(src.h - 1 - y, src.w - 1 - x, ch);
    return out;
  }
  Image out(src.w, src.h, src.c);
  for (int y = 0; y < src.h; ++y)
    for (int x = 0; x < src.w; ++x)
      for (int ch = 0; ch < src.c; ++ch) {
        if (k == 1)
          out.at(src.w - 1 - x, y, ch) = src.at(y, x, ch);
        else  // k == 3
          out.at(x, src.h - 1 - y, ch) = src.at(y, x, ch);
      }
  return out;
}

Image to_grayscale(const Image& src) {
  Image out(src.h, src.w, src.c);
  for (int y = 0; y < src.h; ++y)
    for (int x = 0; x < src.w; ++x) {
      double g;
      if (src.c >= 3)
        g = 0.299 * src.at(y, x, 0) + 0.587 * src.at(y, x, 1) + 0.114 * src.at(y, x, 2);
      else
        g = src.at(y, x, 0);
      for (int ch = 0; ch < src.c; ++ch) out.at(y, x, ch) = g;
    }
  return out;
}

void rgb_to_hsv(double r, double g, double b, double& h, double& s, double& v) {
  double mx = std::max({r, g, b});
  double mn = std::min({r, g, b});
  double d = mx - mn;
  v = mx;
  s = mx <= 0.0 ? 0.0 : d / mx;
  if (d <= 0.0) {
    h = 0.0;
    return;
  }
  if (mx == r)
    h = std::fmod((g - b) / d, 6.0);
  else if (mx == g)
    h = (b - r) / d + 2.0;
  else
    h = (r - g) / d + 4.0;
  h /= 6.0;
  if (h < 0.0) h += 1.0;
}

void hsv_to_rgb(double h, double s, double v, double& r, double& g, double& b) {
  h = h - std::floor(h);
  double hh = h * 6.0;
  int i = static_cast<int>(hh) % 6;
  double f = hh - std::floor(hh);
  double p = v * (1.0 - s);
  double q = v * (1.0 - s * f);
  double t = v * (1.0 - s * (1.0 - f));
  switch (i) {
    case 0: r = v; g = t; b = p; break;
    case 1: r = q; g = v; b = p; break;
    case 2: r = p; g = v; b = t; break;
    case 3: r = p; g = q; b = v; break;
    case 4: r = t; g = p; b = v; break;
    default: r = v; g = p; b = q; break;
  }
}

void clamp01_inplace(Image& im) {
  for (double& v : im.data) v = clamp01(v);
}

double mean_abs_diff(const Image& a, const Image& b) {
  require(a.same_shape(b), "mean_abs_diff: shape mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) acc += std::abs(a.data[i] - b.data[i]);
  return a.data.empty() ? 0.0 : acc / static_cast<double>(a.data.size());
}

std::uint64_t content_hash(const Image& im) {
  std::uint64_t h = fnv1a(im.data.data(), im.data.size() * sizeof(double));
  h = mix64(h ^ (static_cast<std::uint64_t>(im.h) << 32 | static_cast<std::uint64_t>(im.w) << 8 |
                 static_cast<std::uint64_t>(im.c)));
  return h;
}

}  // namespace csi
