#pragma once

#include <string>
#include <vector>

#include "csi/data.hpp"
#include "csi/image.hpp"

namespace csi {

Image load_image(const std::string& path);
void save_image_png(const std::string& path, const Image& im);

/// Class-subfolder directory -> flat labeled samples; classes sorted by name.
struct DirDataset {
  std::vector<Sample> samples;
  std::vector<std::string> class_names;
};
DirDataset load_image_dir(const std::string& dir);

/// All images directly inside one directory (non-recursive).
std::vector<Image> load_flat_image_dir(const std::string& dir);

struct FixedResizeResult {
  std::string manifest_path;
  int written = 0;
  int skipped = 0;
};

/// Square-resizes a sampled subset of a class-subfolder tree into out_dir,
/// recording every output (and every skipped unreadable file) in a JSONL
/// manifest together with the kernel/seed used.
FixedResizeResult fixed_resize_dataset(const std::string& source_dir, const std::string& out_dir,
                                       int size, int per_class_count,
                                       const std::vector<std::string>& exclude,
                                       std::uint64_t rng_seed,
                                       ResizeKernel kernel = ResizeKernel::Triangle);

}  // namespace csi
