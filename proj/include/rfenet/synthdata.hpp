#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "rfenet/tensor.hpp"

namespace rfenet {

/// One training example: RGB image in [0, 1] (3 × H·W), class mask
/// (0 = background) and binary boundary band, all H × W row-major.
struct GlassSample {
  int height = 0;
  int width = 0;
  Mat<float> image;
  std::vector<int> mask;
  std::vector<std::uint8_t> boundary;
  std::string id;
};

enum class ShapeFamily { rect, ellipse, polygon, mixed };

ShapeFamily parse_shape_family(const std::string& name);
std::string to_string(ShapeFamily family);

struct SceneSpec {
  int height = 64;
  int width = 64;
  int n_objects = 2;
  int n_classes = 3;
  ShapeFamily shape_family = ShapeFamily::mixed;
  double transparency_alpha = 0.6;
  int reflective_streaks = 2;
  int boundary_thickness = 8;
  std::uint64_t rng_seed = 0;

  void validate() const;
};

/// Deterministic procedural scene: textured background, glass objects that
/// alpha-blend a refracted copy of the background with a class tint, plus
/// bright reflective streaks inside the glass.
GlassSample generate_scene(const SceneSpec& spec);

/// Band of pixels whose Chebyshev distance to a label transition pixel is
/// below ⌈thickness/2⌉. A transition pixel differs from one of its
/// 4-neighbours; the image border is not a transition.
std::vector<std::uint8_t> mask_to_boundary(const std::vector<int>& mask, int height, int width,
                                           int thickness);

/// Per-sample seed derived from a base seed (splitmix64 of the pair).
std::uint64_t sample_seed(std::uint64_t base_seed, std::uint64_t index);

/// Settings for a whole synthetic dataset.
struct DatasetSpec {
  int count = 100;
  std::uint64_t seed = 1;
  SceneSpec scene;  // rng_seed and n_objects are overridden per sample
  int min_objects = 1;
  int max_objects = 3;
  double train_fraction = 0.8;
  double val_fraction = 0.1;
};

/// Generates `spec.count` samples; `workers` threads (≥ 1) share the work.
std::vector<GlassSample> generate_dataset(const DatasetSpec& spec, int workers = 1);

struct Manifest {
  std::map<std::string, std::vector<std::string>> splits;  // train / val / test
  int n_classes = 0;
  int height = 0;
  int width = 0;
  int boundary_thickness = 0;
  std::string generator_version;

  std::size_t count(const std::string& split) const;
};

inline const char* kGeneratorVersion = "rfenet-synth/1.0";

/// Split sizes for n samples: train = round(n·f_train), val = round(n·f_val),
/// test = remainder.
std::map<std::string, int> split_counts(int n, double train_fraction, double val_fraction);

/// Writes root/{split}/{images,masks,boundaries}/<id>.png and
/// root/manifest.json. Samples are assigned to splits in order.
Manifest write_dataset(const std::vector<GlassSample>& samples,
                       const std::filesystem::path& root, double train_fraction,
                       double val_fraction, int n_classes, int boundary_thickness);

Manifest read_manifest(const std::filesystem::path& root);

/// Loads every sample of one split.
std::vector<GlassSample> read_split(const std::filesystem::path& root, const std::string& split);

GlassSample read_sample(const std::filesystem::path& root, const std::string& split,
                        const std::string& id);

}  // namespace rfenet
