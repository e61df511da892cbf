#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

namespace airid {

// "AIRC" container: magic, u32 version, u32 metadata length, UTF-8 JSON
// metadata, u32 record count, then records of
// {u32 name length, name, u32 rank, u32 dims[rank], f32 data row-major}.
// All integers and floats little-endian.
inline constexpr char kCheckpointMagic[4] = {'A', 'I', 'R', 'C'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointRecord {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::vector<float> data;

  bool operator==(const CheckpointRecord&) const = default;
};

struct Checkpoint {
  nlohmann::json metadata = nlohmann::json::object();
  std::vector<CheckpointRecord> records;

  const CheckpointRecord* find(const std::string& name) const;
  const CheckpointRecord& at(const std::string& name) const;
  bool operator==(const Checkpoint&) const = default;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& checkpoint);
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint read_checkpoint(const std::filesystem::path& path);

// Shared helpers for the binary formats.
std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);
std::uint32_t crc32_of(const std::uint8_t* data, std::size_t size);
std::string crc32_hex(const std::vector<std::uint8_t>& bytes);

}  // namespace airid
