#include "airid/synthdata.hpp"

#include <algorithm>
#include <array>
#include <limits>
#include <map>
#include <random>
#include <set>

#include "airid/errors.hpp"

namespace airid {

namespace {

using Rgb = std::array<float, 3>;

struct Region {
  int row_begin, row_end;  // inclusive-exclusive
  int col_begin, col_end;
};

// Binary groups take these regions in schema order, with (on, off) colours.
struct BinaryRegion {
  Region region;
  Rgb on;
  Rgb off;
};

constexpr Rgb kBackground{0.50f, 0.50f, 0.50f};

const std::vector<BinaryRegion>& binary_regions() {
  static const std::vector<BinaryRegion> regions = {
      {{0, 2, 0, 8}, {0.15f, 0.15f, 0.55f}, {0.80f, 0.65f, 0.50f}},  // hat vs bare head
      {{2, 6, 0, 1}, {0.25f, 0.15f, 0.05f}, kBackground},             // long hair
      {{6, 8, 0, 1}, {0.85f, 0.70f, 0.55f}, kBackground},             // bare arm
      {{2, 10, 7, 8}, {0.35f, 0.20f, 0.10f}, kBackground},            // backpack stripe
      {{8, 12, 0, 1}, {0.70f, 0.10f, 0.50f}, kBackground},            // handbag
      {{14, 16, 0, 8}, {0.08f, 0.08f, 0.08f}, {0.80f, 0.80f, 0.75f}}, // shoes
  };
  return regions;
}

const std::vector<Region>& categorical_regions() {
  static const std::vector<Region> regions = {
      {2, 8, 1, 7},   // upper body
      {8, 14, 1, 7},  // lower body
  };
  return regions;
}

const std::vector<Rgb>& categorical_palette() {
  static const std::vector<Rgb> palette = {
      {0.85f, 0.15f, 0.15f}, {0.15f, 0.70f, 0.20f}, {0.15f, 0.25f, 0.85f}, {0.90f, 0.85f, 0.15f},
      {0.10f, 0.10f, 0.12f}, {0.92f, 0.92f, 0.88f}, {0.55f, 0.35f, 0.15f}, {0.60f, 0.20f, 0.70f},
  };
  return palette;
}

std::string key_of(const AttributeVector& v) {
  std::string key(v.values.size(), '0');
  for (std::size_t i = 0; i < v.values.size(); ++i) key[i] = v.values[i] > 0.5f ? '1' : '0';
  return key;
}

}  // namespace

int AttributeSchema::attribute_size() const {
  int n = 0;
  for (const auto& g : groups) n += g.slots();
  return n;
}

std::vector<int> AttributeSchema::offsets() const {
  std::vector<int> out;
  int off = 0;
  for (const auto& g : groups) {
    out.push_back(off);
    off += g.slots();
  }
  return out;
}

std::vector<std::string> AttributeSchema::slot_names() const {
  std::vector<std::string> names;
  for (const auto& g : groups) {
    if (g.binary()) {
      names.push_back(g.name);
    } else {
      for (const auto& v : g.values) names.push_back(g.name + "=" + v);
    }
  }
  return names;
}

std::uint64_t AttributeSchema::combinations() const {
  std::uint64_t total = 1;
  for (const auto& g : groups) {
    const auto k = static_cast<std::uint64_t>(g.binary() ? 2 : g.values.size());
    if (total > std::numeric_limits<std::uint64_t>::max() / k) return std::numeric_limits<std::uint64_t>::max();
    total *= k;
  }
  return total;
}

void AttributeSchema::validate() const {
  if (groups.empty()) throw ConfigError("attribute schema has no groups");
  for (std::size_t i = 0; i < groups.size(); ++i) {
    if (groups[i].values.size() == 1) {
      throw ConfigError("attribute group " + std::to_string(i) + " ('" + groups[i].name +
                        "') is categorical with fewer than 2 values");
    }
  }
}

AttributeSchema AttributeSchema::desk_default() {
  AttributeSchema s;
  for (const char* name : {"hat", "long_hair", "short_sleeve", "backpack", "handbag", "dark_shoes"}) {
    s.groups.push_back({name, {}});
  }
  s.groups.push_back({"upper_color", {"red", "green", "blue", "yellow"}});
  s.groups.push_back({"lower_color", {"black", "white", "brown", "purple"}});
  return s;
}

nlohmann::json AttributeSchema::to_json() const {
  nlohmann::json groups_json = nlohmann::json::array();
  for (const auto& g : groups) {
    nlohmann::json gj{{"name", g.name}, {"kind", g.binary() ? "binary" : "categorical"}};
    if (!g.binary()) gj["values"] = g.values;
    groups_json.push_back(gj);
  }
  return nlohmann::json{{"groups", groups_json}};
}

AttributeSchema AttributeSchema::from_json(const nlohmann::json& j) {
  AttributeSchema s;
  for (const auto& gj : j.at("groups")) {
    AttributeGroup g;
    g.name = gj.at("name").get<std::string>();
    const auto kind = gj.at("kind").get<std::string>();
    if (kind == "categorical") {
      g.values = gj.at("values").get<std::vector<std::string>>();
      if (g.values.size() < 2) throw DataError("categorical group '" + g.name + "' needs at least 2 values");
    } else if (kind != "binary") {
      throw DataError("unknown attribute group kind '" + kind + "'");
    }
    s.groups.push_back(std::move(g));
  }
  return s;
}

void validate_attributes(const AttributeSchema& schema, const AttributeVector& attrs) {
  if (static_cast<int>(attrs.values.size()) != schema.attribute_size()) {
    throw DataError("attribute vector has length " + std::to_string(attrs.values.size()) + ", schema expects " +
                    std::to_string(schema.attribute_size()));
  }
  const auto offsets = schema.offsets();
  for (std::size_t gi = 0; gi < schema.groups.size(); ++gi) {
    const auto& g = schema.groups[gi];
    float total = 0.0f;
    for (int s = 0; s < g.slots(); ++s) {
      const float v = attrs.values[offsets[gi] + s];
      if (v != 0.0f && v != 1.0f) {
        throw DataError("attribute group " + std::to_string(gi) + " ('" + g.name + "') has a non-binary slot value");
      }
      total += v;
    }
    if (!g.binary() && total != 1.0f) {
      throw DataError("attribute group " + std::to_string(gi) + " ('" + g.name + "') is not one-hot");
    }
  }
}

AttributeVector encode_attributes(const AttributeSchema& schema, const std::vector<int>& choices) {
  if (choices.size() != schema.groups.size()) throw DataError("one choice per attribute group is required");
  AttributeVector v;
  v.values.assign(static_cast<std::size_t>(schema.attribute_size()), 0.0f);
  const auto offsets = schema.offsets();
  for (std::size_t gi = 0; gi < schema.groups.size(); ++gi) {
    const auto& g = schema.groups[gi];
    const int c = choices[gi];
    if (c < 0 || c >= (g.binary() ? 2 : g.slots())) {
      throw DataError("attribute group " + std::to_string(gi) + " choice " + std::to_string(c) + " out of range");
    }
    if (g.binary()) {
      v.values[offsets[gi]] = static_cast<float>(c);
    } else {
      v.values[offsets[gi] + c] = 1.0f;
    }
  }
  return v;
}

std::vector<SemanticId> assign_semantic_ids(const AttributeSchema& schema,
                                            const std::vector<AttributeVector>& vectors) {
  std::map<std::string, SemanticId> ids;
  std::vector<SemanticId> out;
  out.reserve(vectors.size());
  for (const auto& v : vectors) {
    validate_attributes(schema, v);
    auto [it, inserted] = ids.try_emplace(key_of(v), static_cast<SemanticId>(ids.size()));
    out.push_back(it->second);
  }
  return out;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 finaliser over the combined value
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

PersonImage render(const AttributeSchema& schema, const AttributeVector& attrs, int view_id, std::uint64_t seed,
                   const RenderOptions& options) {
  validate_attributes(schema, attrs);
  const ImageGeometry geo = options.geometry;
  if (geo.height < 16 || geo.width < 8 || geo.channels != 3) {
    throw ConfigError("render needs images of at least 16x8 with 3 channels");
  }

  std::vector<Rgb> base(static_cast<std::size_t>(geo.height * geo.width), kBackground);
  auto paint = [&](const Region& r, const Rgb& colour) {
    for (int row = r.row_begin; row < r.row_end; ++row) {
      for (int col = r.col_begin; col < r.col_end; ++col) base[row * geo.width + col] = colour;
    }
  };

  const auto offsets = schema.offsets();
  std::size_t next_binary = 0;
  std::size_t next_categorical = 0;
  for (std::size_t gi = 0; gi < schema.groups.size(); ++gi) {
    const auto& g = schema.groups[gi];
    if (g.binary()) {
      if (next_binary >= binary_regions().size()) throw ConfigError("render: too many binary attribute groups");
      const auto& br = binary_regions()[next_binary++];
      paint(br.region, attrs.values[offsets[gi]] > 0.5f ? br.on : br.off);
    } else {
      if (next_categorical >= categorical_regions().size()) {
        throw ConfigError("render: too many categorical attribute groups");
      }
      if (g.values.size() > categorical_palette().size()) throw ConfigError("render: categorical group too large");
      int chosen = 0;
      for (int s = 0; s < g.slots(); ++s) {
        if (attrs.values[offsets[gi] + s] > 0.5f) chosen = s;
      }
      // Each categorical group draws from its own slice of the palette.
      const std::size_t shift = next_categorical * 4;
      paint(categorical_regions()[next_categorical++],
            categorical_palette()[(shift + static_cast<std::size_t>(chosen)) % categorical_palette().size()]);
    }
  }

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> illum(options.illumination_min, options.illumination_max);
  std::uniform_int_distribution<int> jitter(-options.max_jitter_rows, options.max_jitter_rows);
  std::normal_distribution<double> noise(0.0, 1.0);

  double scale = options.fixed_illumination ? 1.0 : illum(rng);
  if (!options.fixed_illumination && view_id == 1) scale *= options.view1_bias;
  const int shift = options.max_jitter_rows > 0 ? jitter(rng) : 0;

  PersonImage img;
  img.geometry = geo;
  img.view_id = view_id;
  img.pixels.resize(static_cast<std::size_t>(geo.pixels()));
  for (int row = 0; row < geo.height; ++row) {
    const int src = row - shift;
    for (int col = 0; col < geo.width; ++col) {
      const Rgb& c = (src >= 0 && src < geo.height) ? base[src * geo.width + col] : kBackground;
      for (int ch = 0; ch < 3; ++ch) {
        double v = c[ch] * scale;
        if (options.noise_sigma > 0.0) v += options.noise_sigma * noise(rng);
        img.pixels[(static_cast<std::size_t>(row) * geo.width + col) * 3 + ch] =
            static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
  }
  return img;
}

DatasetSplit make_split(const AttributeSchema& schema, const SplitOptions& options) {
  schema.validate();
  if (options.n_train_ids <= 0 || options.n_test_ids <= 0 || options.imgs_per_id_per_view <= 0 || options.views <= 0) {
    throw ConfigError("make_split: id counts, images per id and views must be positive");
  }
  const std::uint64_t wanted = static_cast<std::uint64_t>(options.n_train_ids) + options.n_test_ids;
  const std::uint64_t available = schema.combinations();
  if (wanted > available) {
    throw DataError("make_split: requested " + std::to_string(wanted) + " semantic ids but the schema realises at most " +
                    std::to_string(available));
  }

  std::mt19937_64 rng(mix_seed(options.seed, 0));
  std::set<std::vector<int>> seen;
  std::vector<AttributeVector> unique;
  while (unique.size() < wanted) {
    std::vector<int> choices;
    for (const auto& g : schema.groups) {
      std::uniform_int_distribution<int> pick(0, g.binary() ? 1 : g.slots() - 1);
      choices.push_back(pick(rng));
    }
    if (seen.insert(choices).second) unique.push_back(encode_attributes(schema, choices));
  }

  DatasetSplit split;
  split.schema = schema;
  split.geometry = options.render.geometry;
  split.num_train_ids = options.n_train_ids;
  split.seed = options.seed;

  std::vector<AttributeVector> per_image;
  std::vector<int> per_image_view;
  std::vector<std::size_t> per_image_unique;
  for (std::size_t u = 0; u < unique.size(); ++u) {
    for (int view = 0; view < options.views; ++view) {
      for (int r = 0; r < options.imgs_per_id_per_view; ++r) {
        per_image.push_back(unique[u]);
        per_image_view.push_back(view);
        per_image_unique.push_back(u);
      }
    }
  }
  const auto ids = assign_semantic_ids(schema, per_image);

  for (std::size_t i = 0; i < per_image.size(); ++i) {
    Sample s;
    s.image = render(schema, per_image[i], per_image_view[i], mix_seed(options.seed, 1000 + i), options.render);
    s.image.semantic_id = ids[i];
    s.attributes = per_image[i];
    s.semantic_id = ids[i];
    s.image_index = static_cast<int>(i);
    if (per_image_unique[i] < static_cast<std::size_t>(options.n_train_ids)) {
      split.train.push_back(std::move(s));
    } else {
      split.gallery.push_back(std::move(s));
    }
  }
  std::set<SemanticId> query_ids;
  for (const auto& s : split.gallery) {
    if (query_ids.insert(s.semantic_id).second) split.queries.push_back({s.attributes, s.semantic_id});
  }
  return split;
}

}  // namespace airid
