#include "airid/checkpoint.hpp"

#include <zlib.h>

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>

#include "airid/detail/binary.hpp"
#include "airid/errors.hpp"

namespace airid {

const CheckpointRecord* Checkpoint::find(const std::string& name) const {
  for (const auto& r : records) {
    if (r.name == name) return &r;
  }
  return nullptr;
}

const CheckpointRecord& Checkpoint::at(const std::string& name) const {
  const auto* r = find(name);
  if (r == nullptr) throw DataError("checkpoint has no record named '" + name + "'");
  return *r;
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& checkpoint) {
  detail::ByteWriter w;
  w.raw(kCheckpointMagic, 4);
  w.u32(kCheckpointVersion);
  const std::string meta = checkpoint.metadata.dump();
  w.u32(static_cast<std::uint32_t>(meta.size()));
  w.bytes(meta);
  w.u32(static_cast<std::uint32_t>(checkpoint.records.size()));
  for (const auto& r : checkpoint.records) {
    std::size_t count = 1;
    for (auto d : r.dims) count *= d;
    if (count != r.data.size()) {
      throw DataError("checkpoint record '" + r.name + "' dims do not match its data length");
    }
    w.u32(static_cast<std::uint32_t>(r.name.size()));
    w.bytes(r.name);
    w.u32(static_cast<std::uint32_t>(r.dims.size()));
    for (auto d : r.dims) w.u32(d);
    w.raw(r.data.data(), r.data.size() * sizeof(float));
  }
  return std::move(w.buffer());
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  detail::ByteReader r(bytes, "checkpoint");
  char magic[4];
  r.raw(magic, 4);
  if (std::memcmp(magic, kCheckpointMagic, 4) != 0) throw BadMagicError("checkpoint: bad magic, expected AIRC");
  const auto version = r.u32();
  if (version != kCheckpointVersion) {
    throw VersionError("checkpoint: unsupported version " + std::to_string(version));
  }
  Checkpoint ckpt;
  const auto meta_len = r.u32();
  const std::string meta = r.string(meta_len);
  try {
    ckpt.metadata = nlohmann::json::parse(meta);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint: metadata is not valid JSON: ") + e.what());
  }
  const auto count = r.u32();
  ckpt.records.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    CheckpointRecord rec;
    rec.name = r.string(r.u32());
    const auto rank = r.u32();
    if (rank > 8) throw DataError("checkpoint: record '" + rec.name + "' has implausible rank");
    std::size_t n = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      rec.dims.push_back(r.u32());
      n *= rec.dims.back();
    }
    r.require(n * sizeof(float));
    rec.data.resize(n);
    r.raw(rec.data.data(), n * sizeof(float));
    ckpt.records.push_back(std::move(rec));
  }
  if (r.remaining() != 0) throw DataError("checkpoint: trailing bytes after last record");
  return ckpt;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed for " + path.string());
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  write_file_bytes(path, encode_checkpoint(checkpoint));
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw DataError("checkpoint not found: " + path.string());
  return decode_checkpoint(read_file_bytes(path));
}

std::uint32_t crc32_of(const std::uint8_t* data, std::size_t size) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  while (size > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(size, 1u << 30));
    crc = ::crc32(crc, data, chunk);
    data += chunk;
    size -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

std::string crc32_hex(const std::vector<std::uint8_t>& bytes) {
  char buf[9];
  std::snprintf(buf, sizeof buf, "%08x", crc32_of(bytes.data(), bytes.size()));
  return buf;
}

}  // namespace airid
