#pragma once

#include <map>
#include <string>
#include <vector>

#include "csi/image.hpp"
#include "csi/serialize.hpp"

namespace csi {

struct Sample {
  Image pixels;
  int label = -1;        // -1 = unlabeled
  int shift_label = -1;  // -1 = none
  std::string id;
};

void validate_sample(const Sample& s);

struct DatasetSplit {
  std::vector<Sample> in_train;
  std::vector<Sample> in_test;
  std::map<std::string, std::vector<Sample>> ood_test;
};

struct LabeledDataset {
  std::vector<Sample> train;
  std::vector<Sample> test;
  std::vector<std::string> class_names;
  int num_classes() const { return static_cast<int>(class_names.size()); }
};

/// Partitions per class into train/test by fraction under the seed, then
/// keeps target-class samples as in-distribution and the other classes' test
/// samples as ood_test["rest"].
DatasetSplit one_class_split(const std::vector<Sample>& dataset, int target_class,
                             double test_fraction, std::uint64_t seed);

/// Same split as a pre-partitioned dataset (train/test already fixed).
DatasetSplit one_class_split(const LabeledDataset& dataset, int target_class);

/// Pixel-midpoint samples of distinct test-set pairs.
std::vector<Sample> interp_generator(const std::vector<Sample>& test_set, int count,
                                     std::uint64_t rng_seed);

/// Deterministic per-class train/test partition of a flat sample list.
LabeledDataset partition_dataset(const std::vector<Sample>& samples,
                                 const std::vector<std::string>& class_names,
                                 double test_fraction, std::uint64_t seed);

/// Synthetic outdoor-scene corpus with a strong vertical orientation cue
/// (sky gradient, horizon, sun disc). Classes: meadow, dunes, night, sea.
LabeledDataset make_scene_dataset(int per_class, int hw, double test_fraction,
                                  std::uint64_t seed, int num_classes = 4);

/// Smooth low-frequency color fields at high resolution, for resize studies.
std::vector<Image> make_smooth_corpus(int count, int hw, std::uint64_t seed);

/// Packed dataset container (.csid).
void save_dataset(const std::string& path, const LabeledDataset& ds);
LabeledDataset load_dataset(const std::string& path);

}  // namespace csi
