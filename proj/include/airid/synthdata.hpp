#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace airid {

/// One attribute group: binary (one slot) or categorical (k >= 2 one-hot slots).
struct AttributeGroup {
  std::string name;
  std::vector<std::string> values;  // empty for binary groups

  bool binary() const { return values.empty(); }
  int slots() const { return binary() ? 1 : static_cast<int>(values.size()); }
  bool operator==(const AttributeGroup&) const = default;
};

struct AttributeSchema {
  std::vector<AttributeGroup> groups;

  int attribute_size() const;
  /// Slot offset of each group within the encoded vector.
  std::vector<int> offsets() const;
  std::vector<std::string> slot_names() const;
  /// Number of distinct encodable vectors, saturating at UINT64_MAX.
  std::uint64_t combinations() const;
  /// Throws ConfigError if a categorical group has fewer than two values.
  void validate() const;

  /// 6 binary groups + 2 four-way colour groups; attribute_size = 14.
  static AttributeSchema desk_default();

  nlohmann::json to_json() const;
  static AttributeSchema from_json(const nlohmann::json& j);
  bool operator==(const AttributeSchema&) const = default;
};

struct AttributeVector {
  std::vector<float> values;
  bool operator==(const AttributeVector&) const = default;
};

/// Throws DataError naming the first offending group index.
void validate_attributes(const AttributeSchema& schema, const AttributeVector& attrs);

/// Builds a valid vector from one choice per group (0/1 for binary groups,
/// the value index for categorical ones).
AttributeVector encode_attributes(const AttributeSchema& schema, const std::vector<int>& choices);

using SemanticId = int;

/// Dense ids 0..U-1 in first-occurrence order; equal vectors share an id.
std::vector<SemanticId> assign_semantic_ids(const AttributeSchema& schema, const std::vector<AttributeVector>& vectors);

struct ImageGeometry {
  int height = 16;
  int width = 8;
  int channels = 3;
  int pixels() const { return height * width * channels; }
  bool operator==(const ImageGeometry&) const = default;
};

struct PersonImage {
  ImageGeometry geometry;
  std::vector<float> pixels;  // row-major (H, W, C), values in [0, 1]
  int view_id = 0;
  SemanticId semantic_id = 0;

  float at(int row, int col, int channel) const {
    return pixels[(static_cast<std::size_t>(row) * geometry.width + col) * geometry.channels + channel];
  }
  bool operator==(const PersonImage&) const = default;
};

/// Nuisance settings for rendering. The defaults are the dataset's
/// nuisance model; tests zero them to inspect the base rendering.
struct RenderOptions {
  ImageGeometry geometry;
  double noise_sigma = 0.05;
  double illumination_min = 0.7;
  double illumination_max = 1.3;
  double view1_bias = 0.85;
  int max_jitter_rows = 1;
  bool fixed_illumination = false;  // illumination exactly 1 for every view
};

/// Renders attributes into a person-like image for the given camera view.
/// Pure function of its arguments. Requires the desk-default schema layout
/// (6 binary + 2 categorical groups with up to 4 values each) at 16x8 or larger.
PersonImage render(const AttributeSchema& schema, const AttributeVector& attrs, int view_id, std::uint64_t seed,
                   const RenderOptions& options = {});

struct Sample {
  PersonImage image;
  AttributeVector attributes;
  SemanticId semantic_id = 0;
  int image_index = 0;
  bool operator==(const Sample&) const = default;
};

struct Query {
  AttributeVector attributes;
  SemanticId semantic_id = 0;
  bool operator==(const Query&) const = default;
};

struct DatasetSplit {
  AttributeSchema schema;
  ImageGeometry geometry;
  std::vector<Sample> train;
  std::vector<Sample> gallery;
  std::vector<Query> queries;
  int num_train_ids = 0;
  std::uint64_t seed = 0;

  bool operator==(const DatasetSplit&) const = default;
};

struct SplitOptions {
  int n_train_ids = 40;
  int n_test_ids = 20;
  int imgs_per_id_per_view = 6;
  int views = 2;
  std::uint64_t seed = 7;
  RenderOptions render;
};

/// Samples distinct attribute vectors, assigns train ids 0..n_train-1 and
/// test ids after them, and renders every image. Train images precede
/// gallery images in the global image index.
DatasetSplit make_split(const AttributeSchema& schema, const SplitOptions& options);

// On-disk layout: attributes.tsv, images.bin, split.json inside `dir`.
void write_dataset(const std::filesystem::path& dir, const DatasetSplit& split);
DatasetSplit read_dataset(const std::filesystem::path& dir);

// images.bin codec: magic AIRB, u32 version, u32 count, u32 H, u32 W, u32 C,
// float32 payload, u32 CRC32 of the payload.
std::vector<std::uint8_t> encode_images(const std::vector<const PersonImage*>& images, const ImageGeometry& geometry);
std::vector<std::vector<float>> decode_images(const std::vector<std::uint8_t>& bytes, ImageGeometry& geometry);

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace airid
