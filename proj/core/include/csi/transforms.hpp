#pragma once

#include <string>
#include <vector>

#include "csi/image.hpp"
#include "csi/serialize.hpp"

namespace csi {

enum class AugMode { Train, Controlled };

/// Random augmentation family T (crop, flip, HSV jitter, grayscale).
struct AugmentationPolicy {
  double crop_area_lo = 0.08;
  double crop_area_hi = 1.0;
  double flip_prob = 0.5;
  double jitter_prob = 0.8;
  double jitter_hue = 0.1;   // additive hue delta bound (hue wraps)
  double jitter_sat = 0.4;   // multiplicative bound: factor in [1-s, 1+s]
  double jitter_val = 0.4;
  double grayscale_prob = 0.2;
  AugMode mode = AugMode::Train;

  void validate() const;
  static AugmentationPolicy identity();

  json to_json() const;
  static AugmentationPolicy from_json(const json& j);
};

/// A fully sampled transform: applying it is deterministic.
struct ConcreteAugmentation {
  double crop_area = 1.0;
  double crop_cy = 0.5, crop_cx = 0.5;  // relative placement of the crop window
  bool flip = false;
  bool jitter = false;
  double hue_delta = 0.0, sat_factor = 1.0, val_factor = 1.0;
  bool grayscale = false;

  Image apply(const Image& x) const;
};

/// Draws one concrete transform. Controlled mode replaces every random draw
/// by its representative value (distribution mean / majority toggle), so the
/// result does not consume rng state.
ConcreteAugmentation sample_augmentation(const AugmentationPolicy& policy, Rng& rng);

/// One primitive shift step; a family member is a step sequence (empty =
/// identity). Noise/cutout randomness is keyed on (step seed, pixel content)
/// so re-application is bit-stable.
struct ShiftStep {
  std::string kind;  // rot | perm | noise | blur | cutout | sobel
  int turns = 0;
  int grid = 2;
  std::vector<int> perm;  // target block index -> source block index
  double sigma = 0.1;
  double frac = 0.25;
  std::uint64_t seed = 0;

  json to_json() const;
  static ShiftStep from_json(const json& j);
};

/// Shifting family S with member 0 always the identity.
struct ShiftFamily {
  std::string name;
  std::vector<std::string> member_names;
  std::vector<std::vector<ShiftStep>> members;

  int k() const { return static_cast<int>(members.size()); }
  void validate() const;

  json to_json() const;
  static ShiftFamily from_json(const json& j);
};

/// Applies family member k; k=0 returns the input bit-exactly.
Image apply_shift(const Image& x, const ShiftFamily& family, int k);

struct ShiftFamilyParams {
  int perm_grid = 2;
  int perm_k = 4;
  double noise_sigma = 0.1;
  double blur_sigma = 1.0;
  double cutout_frac = 0.25;
};

/// name in {identity, rotate, perm, noise, blur, cutout, sobel}.
ShiftFamily make_shift_family(const std::string& name, const ShiftFamilyParams& params,
                              std::uint64_t seed);

/// Cartesian product; member (i,j) applies b's member j, then a's member i.
ShiftFamily compose_shift_families(const ShiftFamily& a, const ShiftFamily& b, int cap = 64);

/// Parses "rotate", "rotate*noise", ... (composition is left-associative).
ShiftFamily make_shift_family_spec(const std::string& spec, const ShiftFamilyParams& params,
                                   std::uint64_t seed, int cap = 64);

}  // namespace csi
