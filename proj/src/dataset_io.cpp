#include <fstream>
#include <map>
#include <sstream>

#include "airid/checkpoint.hpp"
#include "airid/detail/binary.hpp"
#include "airid/errors.hpp"
#include "airid/synthdata.hpp"

namespace airid {

namespace {

constexpr char kImagesMagic[4] = {'A', 'I', 'R', 'B'};
constexpr std::uint32_t kImagesVersion = 1;
constexpr int kSplitVersion = 1;

std::vector<const Sample*> all_samples(const DatasetSplit& split) {
  std::vector<const Sample*> out;
  for (const auto& s : split.train) out.push_back(&s);
  for (const auto& s : split.gallery) out.push_back(&s);
  std::sort(out.begin(), out.end(), [](const Sample* a, const Sample* b) { return a->image_index < b->image_index; });
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (out[i]->image_index != static_cast<int>(i)) {
      throw DataError("write_dataset: image indices must be 0..N-1 without gaps");
    }
  }
  return out;
}

std::vector<float> parse_attribute_row(std::istringstream& fields, int size, int line_no) {
  std::vector<float> values;
  std::string cell;
  while (std::getline(fields, cell, '\t')) {
    if (cell != "0" && cell != "1") {
      throw DataError("attributes.tsv line " + std::to_string(line_no) + ": attribute value '" + cell +
                      "' is not 0 or 1");
    }
    values.push_back(cell == "1" ? 1.0f : 0.0f);
  }
  if (static_cast<int>(values.size()) != size) {
    throw DataError("attributes.tsv line " + std::to_string(line_no) + ": expected " + std::to_string(size) +
                    " attribute columns, found " + std::to_string(values.size()));
  }
  return values;
}

}  // namespace

std::vector<std::uint8_t> encode_images(const std::vector<const PersonImage*>& images, const ImageGeometry& geometry) {
  detail::ByteWriter w;
  w.raw(kImagesMagic, 4);
  w.u32(kImagesVersion);
  w.u32(static_cast<std::uint32_t>(images.size()));
  w.u32(static_cast<std::uint32_t>(geometry.height));
  w.u32(static_cast<std::uint32_t>(geometry.width));
  w.u32(static_cast<std::uint32_t>(geometry.channels));
  const std::size_t payload_begin = w.buffer().size();
  for (const auto* img : images) {
    if (img->geometry != geometry || static_cast<int>(img->pixels.size()) != geometry.pixels()) {
      throw DataError("encode_images: image geometry differs from the container geometry");
    }
    w.raw(img->pixels.data(), img->pixels.size() * sizeof(float));
  }
  const auto& buf = w.buffer();
  w.u32(crc32_of(buf.data() + payload_begin, buf.size() - payload_begin));
  return std::move(w.buffer());
}

std::vector<std::vector<float>> decode_images(const std::vector<std::uint8_t>& bytes, ImageGeometry& geometry) {
  detail::ByteReader r(bytes, "images.bin");
  char magic[4];
  r.raw(magic, 4);
  if (std::memcmp(magic, kImagesMagic, 4) != 0) throw BadMagicError("images.bin: bad magic, expected AIRB");
  const auto version = r.u32();
  if (version != kImagesVersion) throw VersionError("images.bin: unsupported version " + std::to_string(version));
  const auto count = r.u32();
  geometry.height = static_cast<int>(r.u32());
  geometry.width = static_cast<int>(r.u32());
  geometry.channels = static_cast<int>(r.u32());
  const std::size_t per_image = static_cast<std::size_t>(geometry.pixels());
  const std::size_t payload_begin = r.position();
  std::vector<std::vector<float>> images(count, std::vector<float>(per_image));
  for (auto& img : images) r.raw(img.data(), per_image * sizeof(float));
  const std::size_t payload_end = r.position();
  const auto stored = r.u32();
  if (r.remaining() != 0) throw DataError("images.bin: trailing bytes after checksum");
  const auto actual = crc32_of(bytes.data() + payload_begin, payload_end - payload_begin);
  if (stored != actual) throw ChecksumError("images.bin: CRC32 mismatch, payload is corrupt");
  return images;
}

void write_dataset(const std::filesystem::path& dir, const DatasetSplit& split) {
  std::filesystem::create_directories(dir);
  const auto samples = all_samples(split);

  std::vector<const PersonImage*> images;
  for (const auto* s : samples) images.push_back(&s->image);
  write_file_bytes(dir / "images.bin", encode_images(images, split.geometry));

  std::ofstream tsv(dir / "attributes.tsv", std::ios::trunc);
  if (!tsv) throw DataError("cannot write " + (dir / "attributes.tsv").string());
  tsv << "image_index\tview_id\tsemantic_id";
  for (const auto& name : split.schema.slot_names()) tsv << '\t' << name;
  tsv << '\n';
  for (const auto* s : samples) {
    tsv << s->image_index << '\t' << s->image.view_id << '\t' << s->semantic_id;
    for (float v : s->attributes.values) tsv << '\t' << (v > 0.5f ? '1' : '0');
    tsv << '\n';
  }

  nlohmann::json j;
  j["format"] = "airid-split";
  j["version"] = kSplitVersion;
  j["seed"] = split.seed;
  j["geometry"] = {{"height", split.geometry.height}, {"width", split.geometry.width},
                   {"channels", split.geometry.channels}};
  j["schema"] = split.schema.to_json();
  j["num_train_semantic_ids"] = split.num_train_ids;
  std::vector<int> train, gallery;
  for (const auto& s : split.train) train.push_back(s.image_index);
  for (const auto& s : split.gallery) gallery.push_back(s.image_index);
  j["train"] = train;
  j["gallery"] = gallery;
  nlohmann::json queries = nlohmann::json::array();
  for (const auto& q : split.queries) {
    std::vector<int> bits;
    for (float v : q.attributes.values) bits.push_back(v > 0.5f ? 1 : 0);
    queries.push_back({{"semantic_id", q.semantic_id}, {"attributes", bits}});
  }
  j["queries"] = queries;
  std::ofstream js(dir / "split.json", std::ios::trunc);
  if (!js) throw DataError("cannot write " + (dir / "split.json").string());
  js << j.dump(2) << '\n';
}

DatasetSplit read_dataset(const std::filesystem::path& dir) {
  for (const char* name : {"split.json", "images.bin", "attributes.tsv"}) {
    if (!std::filesystem::exists(dir / name)) throw DataError("dataset file missing: " + (dir / name).string());
  }
  nlohmann::json j;
  try {
    std::ifstream in(dir / "split.json");
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("split.json is not valid JSON: ") + e.what());
  }

  DatasetSplit split;
  try {
    if (j.at("format").get<std::string>() != "airid-split") throw BadMagicError("split.json: unexpected format tag");
    if (j.at("version").get<int>() != kSplitVersion) throw VersionError("split.json: unsupported version");
    split.seed = j.at("seed").get<std::uint64_t>();
    split.geometry.height = j.at("geometry").at("height").get<int>();
    split.geometry.width = j.at("geometry").at("width").get<int>();
    split.geometry.channels = j.at("geometry").at("channels").get<int>();
    split.schema = AttributeSchema::from_json(j.at("schema"));
    split.num_train_ids = j.at("num_train_semantic_ids").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("split.json: ") + e.what());
  }

  ImageGeometry stored;
  const auto pixels = decode_images(read_file_bytes(dir / "images.bin"), stored);
  if (stored != split.geometry) throw DataError("images.bin geometry disagrees with split.json");

  const int attr_size = split.schema.attribute_size();
  std::ifstream tsv(dir / "attributes.tsv");
  std::string line;
  std::getline(tsv, line);
  std::map<int, Sample> rows;
  int line_no = 1;
  while (std::getline(tsv, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string cell;
    Sample s;
    try {
      std::getline(fields, cell, '\t');
      s.image_index = std::stoi(cell);
      std::getline(fields, cell, '\t');
      s.image.view_id = std::stoi(cell);
      std::getline(fields, cell, '\t');
      s.semantic_id = std::stoi(cell);
    } catch (const std::exception&) {
      throw DataError("attributes.tsv line " + std::to_string(line_no) + ": malformed index columns");
    }
    s.attributes.values = parse_attribute_row(fields, attr_size, line_no);
    validate_attributes(split.schema, s.attributes);
    if (s.image_index < 0 || s.image_index >= static_cast<int>(pixels.size())) {
      throw DataError("attributes.tsv line " + std::to_string(line_no) + ": image index out of range");
    }
    s.image.geometry = split.geometry;
    s.image.pixels = pixels[static_cast<std::size_t>(s.image_index)];
    s.image.semantic_id = s.semantic_id;
    rows.emplace(s.image_index, std::move(s));
  }
  if (rows.size() != pixels.size()) throw DataError("attributes.tsv row count does not match images.bin");

  auto take = [&](const char* key, std::vector<Sample>& out) {
    for (int idx : j.at(key).get<std::vector<int>>()) {
      auto it = rows.find(idx);
      if (it == rows.end()) throw DataError(std::string("split.json ") + key + " lists unknown image " + std::to_string(idx));
      out.push_back(it->second);
    }
  };
  take("train", split.train);
  take("gallery", split.gallery);
  for (const auto& qj : j.at("queries")) {
    Query q;
    q.semantic_id = qj.at("semantic_id").get<int>();
    for (int b : qj.at("attributes").get<std::vector<int>>()) q.attributes.values.push_back(static_cast<float>(b));
    validate_attributes(split.schema, q.attributes);
    split.queries.push_back(std::move(q));
  }
  return split;
}

}  // namespace airid
