#pragma once

#include <cstdint>
#include <vector>

#include "csi/common.hpp"

namespace csi {

/// Dense image, values in [0,1], interleaved HWC doubles.
struct Image {
  int h = 0, w = 0, c = 0;
  std::vector<double> data;

  Image() = default;
  Image(int h_, int w_, int c_) : h(h_), w(w_), c(c_), data(static_cast<std::size_t>(h_) * w_ * c_, 0.0) {}

  double& at(int y, int x, int ch) { return data[(static_cast<std::size_t>(y) * w + x) * c + ch]; }
  double at(int y, int x, int ch) const { return data[(static_cast<std::size_t>(y) * w + x) * c + ch]; }

  std::size_t size() const { return data.size(); }
  bool same_shape(const Image& o) const { return h == o.h && w == o.w && c == o.c; }
};

enum class ResizeKernel { Nearest, Bilinear, Triangle };

const char* resize_kernel_name(ResizeKernel k);
ResizeKernel resize_kernel_from_name(const std::string& name);

/// Resample to (out_h, out_w). Triangle == bilinear with footprint widened by
/// the scale factor when shrinking (antialiased); Bilinear never widens.
Image resize(const Image& src, int out_h, int out_w, ResizeKernel kernel);

/// Axis-aligned crop; the rectangle must lie inside the image.
Image crop(const Image& src, int y0, int x0, int ch_, int cw_);

Image hflip(const Image& src);

/// Rotate by k*90 degrees counter-clockwise.
Image rot90(const Image& src, int k);

/// Luma grayscale replicated across the original channel count.
Image to_grayscale(const Image& src);

void rgb_to_hsv(double r, double g, double b, double& h, double& s, double& v);
void hsv_to_rgb(double h, double s, double v, double& r, double& g, double& b);

inline double clamp01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

void clamp01_inplace(Image& im);

/// Per-pixel mean absolute difference; shapes must match.
double mean_abs_diff(const Image& a, const Image& b);

std::uint64_t content_hash(const Image& im);

}  // namespace csi
