#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "tsfm/dataset.hpp"
#include "tsfm/nn.hpp"

namespace tsfm::io {

inline constexpr int kDatasetFormatVersion = 1;
inline constexpr int kCheckpointFormatVersion = 1;

// Directory layout: manifest.json, data.f32 (row-major [n × C × T] f32le),
// labels.u32 (u32le per sample).
void save_dataset(const std::filesystem::path& dir, const Dataset& ds);
// Validates the manifest and the byte length of both sidecar files.
Dataset load_dataset(const std::filesystem::path& dir);
nlohmann::json dataset_manifest(const Dataset& ds);

struct TensorEntry {
  std::string name;
  Shape shape;
  std::uint64_t offset = 0;  // bytes into the weight block
};

struct Checkpoint {
  std::string kind;
  nlohmann::json config;
  std::uint64_t seed = 0;
  std::uint64_t step = 0;
  std::vector<TensorEntry> tensors;
  std::vector<float> weights;

  // FNV-1a over the compact config dump, as 16 hex digits.
  std::string config_hash() const;
  std::size_t numel() const { return weights.size(); }
};

Checkpoint make_checkpoint(const ParameterSet& params, std::string kind, nlohmann::json config, std::uint64_t seed,
                           std::uint64_t step);
// Copies weights into params. Every tensor must be present on both sides with
// the same shape; the first offender is named in the DimensionError.
void apply_checkpoint(const Checkpoint& ckpt, ParameterSet& params);

// "TSFMCKPT", u32 version, u64 header length, JSON header, f32le weights.
std::vector<std::uint8_t> serialize(const Checkpoint& ckpt);
Checkpoint deserialize(const std::vector<std::uint8_t>& bytes);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& contents);

}  // namespace tsfm::io
