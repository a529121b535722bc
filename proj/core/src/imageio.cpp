#include "csi/imageio.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "csi/serialize.hpp"

namespace fs = std::filesystem;

namespace csi {

namespace {

bool has_image_ext(const fs::path& p) {
  std::string e = to_lower(p.extension().string());
  return e == ".png" || e == ".jpg" || e == ".jpeg" || e == ".bmp";
}

Image from_cv(const cv::Mat& m) {
  require(!m.empty(), "image decode produced an empty matrix");
  require(m.channels() == 1 || m.channels() == 3, "unsupported channel count");
  Image im(m.rows, m.cols, m.channels());
  for (int y = 0; y < m.rows; ++y)
    for (int x = 0; x < m.cols; ++x) {
      if (m.channels() == 1) {
        im.at(y, x, 0) = m.at<unsigned char>(y, x) / 255.0;
      } else {
        cv::Vec3b bgr = m.at<cv::Vec3b>(y, x);
        im.at(y, x, 0) = bgr[2] / 255.0;
        im.at(y, x, 1) = bgr[1] / 255.0;
        im.at(y, x, 2) = bgr[0] / 255.0;
      }
    }
  return im;
}

}  // namespace

Image load_image(const std::string& path) {
  cv::Mat m = cv::imread(path, cv::IMREAD_UNCHANGED);
  require(!m.empty(), "cannot read image: " + path);
  if (m.channels() == 4) cv::cvtColor(m, m, cv::COLOR_BGRA2BGR);
  return from_cv(m);
}

void save_image_png(const std::string& path, const Image& im) {
  cv::Mat m(im.h, im.w, im.c == 1 ? CV_8UC1 : CV_8UC3);
  for (int y = 0; y < im.h; ++y)
    for (int x = 0; x < im.w; ++x) {
      auto q = [&](int ch) {
        return static_cast<unsigned char>(std::lround(clamp01(im.at(y, x, ch)) * 255.0));
      };
      if (im.c == 1)
        m.at<unsigned char>(y, x) = q(0);
      else
        m.at<cv::Vec3b>(y, x) = cv::Vec3b(q(2), q(1), q(0));
    }
  require(cv::imwrite(path, m), "cannot write image: " + path);
}

DirDataset load_image_dir(const std::string& dir) {
  require(fs::is_directory(dir), "not a directory: " + dir);
  DirDataset out;
  std::vector<fs::path> class_dirs;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_directory()) class_dirs.push_back(e.path());
  std::sort(class_dirs.begin(), class_dirs.end());
  require(!class_dirs.empty(), "no class subdirectories in: " + dir);
  for (std::size_t cls = 0; cls < class_dirs.size(); ++cls) {
    out.class_names.push_back(class_dirs[cls].filename().string());
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(class_dirs[cls]))
      if (e.is_regular_file() && has_image_ext(e.path())) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const fs::path& f : files) {
      Sample s;
      s.pixels = load_image(f.string());
      s.label = static_cast<int>(cls);
      s.id = class_dirs[cls].filename().string() + "/" + f.filename().string();
      out.samples.push_back(std::move(s));
    }
  }
  require(!out.samples.empty(), "no images found under: " + dir);
  return out;
}

std::vector<Image> load_flat_image_dir(const std::string& dir) {
  require(fs::is_directory(dir), "not a directory: " + dir);
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && has_image_ext(e.path())) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  require(!files.empty(), "no images found in: " + dir);
  std::vector<Image> out;
  for (const fs::path& f : files) out.push_back(load_image(f.string()));
  return out;
}

FixedResizeResult fixed_resize_dataset(const std::string& source_dir, const std::string& out_dir,
                                       int size, int per_class_count,
                                       const std::vector<std::string>& exclude,
                                       std::uint64_t rng_seed, ResizeKernel kernel) {
  require(size >= 2, "fixed_resize_dataset: size must be >= 2");
  require(per_class_count > 0, "fixed_resize_dataset: per-class count must be positive");
  require(fs::is_directory(source_dir), "not a directory: " + source_dir);

  std::vector<fs::path> class_dirs;
  for (const auto& e : fs::directory_iterator(source_dir))
    if (e.is_directory()) class_dirs.push_back(e.path());
  std::sort(class_dirs.begin(), class_dirs.end());
  require(!class_dirs.empty(), "no class subdirectories in: " + source_dir);

  std::vector<fs::path> kept;
  for (const fs::path& d : class_dirs) {
    std::string name = d.filename().string();
    if (std::find(exclude.begin(), exclude.end(), name) == exclude.end()) kept.push_back(d);
  }
  require(!kept.empty(), "fixed_resize_dataset: exclude list removed every class");

  fs::create_directories(out_dir);
  FixedResizeResult res;
  res.manifest_path = (fs::path(out_dir) / "manifest.jsonl").string();
  std::ofstream manifest(res.manifest_path);
  require(static_cast<bool>(manifest), "cannot write manifest: " + res.manifest_path);
  manifest << json{{"record", "header"},
                   {"size", size},
                   {"per_class_count", per_class_count},
                   {"kernel", resize_kernel_name(kernel)},
                   {"seed", rng_seed}}
                  .dump()
           << "\n";

  for (std::size_t ci = 0; ci < kept.size(); ++ci) {
    std::string cls = kept[ci].filename().string();
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(kept[ci]))
      if (e.is_regular_file() && has_image_ext(e.path())) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    require(!files.empty(), "fixed_resize_dataset: class '" + cls + "' is empty");
    Rng rng(derive_seed(rng_seed, fnv1a(cls.data(), cls.size())));
    rng.shuffle(files);

    fs::create_directories(fs::path(out_dir) / cls);
    int written_cls = 0;
    for (const fs::path& f : files) {
      if (written_cls >= per_class_count) break;
      Image im;
      try {
        im = load_image(f.string());
      } catch (const Error& e) {
        manifest << json{{"record", "skipped"}, {"source", f.string()}, {"reason", e.what()}}
                        .dump()
                 << "\n";
        ++res.skipped;
        continue;
      }
      Image resized = resize(im, size, size, kernel);
      std::string out_name = cls + "-" + std::to_string(written_cls) + ".png";
      std::string out_path = (fs::path(out_dir) / cls / out_name).string();
      save_image_png(out_path, resized);
      manifest << json{{"record", "image"},
                       {"output", out_path},
                       {"source", f.string()},
                       {"class", cls}}
                      .dump()
               << "\n";
      ++written_cls;
      ++res.written;
    }
  }
  require(static_cast<bool>(manifest), "manifest write failed: " + res.manifest_path);
  return res;
}

}  // namespace csi
