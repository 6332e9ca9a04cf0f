#include "tsfm/io.hpp"

#include <algorithm>
#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>

#include "tsfm/errors.hpp"

namespace tsfm::io {

namespace fs = std::filesystem;

namespace {

constexpr char kMagic[8] = {'T', 'S', 'F', 'M', 'C', 'K', 'P', 'T'};

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  std::uint8_t raw[sizeof(T)];
  std::memcpy(raw, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(raw, raw + sizeof(T));
  out.insert(out.end(), raw, raw + sizeof(T));
}

template <typename T>
T get_le(const std::uint8_t* p) {
  std::uint8_t raw[sizeof(T)];
  std::memcpy(raw, p, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(raw, raw + sizeof(T));
  T value;
  std::memcpy(&value, raw, sizeof(T));
  return value;
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void write_bytes(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot open '" + path.string() + "' for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw DataError("failed writing '" + path.string() + "'");
}

template <typename T>
T required(const nlohmann::json& j, const char* key, const fs::path& where) {
  if (!j.contains(key)) throw DataError(where.string() + ": manifest is missing '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(where.string() + ": manifest field '" + key + "' has the wrong type");
  }
}

}  // namespace

std::vector<std::uint8_t> read_file(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

void write_file(const fs::path& path, const std::string& contents) {
  write_bytes(path, std::vector<std::uint8_t>(contents.begin(), contents.end()));
}

nlohmann::json dataset_manifest(const Dataset& ds) {
  nlohmann::json m{{"format_version", kDatasetFormatVersion},
                   {"n_samples", ds.size()},
                   {"n_channels", ds.channels},
                   {"series_length", ds.length},
                   {"sample_rate_hz", ds.sample_rate_hz},
                   {"label_names", ds.label_names},
                   {"subject_ids", ds.subject_ids},
                   {"dtype", "f32le"},
                   {"data_file", "data.f32"},
                   {"labels_file", "labels.u32"}};
  if (!ds.split_tags.empty()) m["split_tags"] = ds.split_tags;
  return m;
}

void save_dataset(const fs::path& dir, const Dataset& ds) {
  ds.validate();
  fs::create_directories(dir);
  std::vector<std::uint8_t> data, labels;
  data.reserve(ds.data.size() * 4);
  for (double v : ds.data) put_le(data, static_cast<float>(v));
  for (auto l : ds.labels) put_le(labels, l);
  write_bytes(dir / "data.f32", data);
  write_bytes(dir / "labels.u32", labels);
  write_file(dir / "manifest.json", dataset_manifest(ds).dump(2) + "\n");
}

Dataset load_dataset(const fs::path& dir) {
  const fs::path manifest_path = dir / "manifest.json";
  nlohmann::json m;
  try {
    const auto raw = read_file(manifest_path);
    m = nlohmann::json::parse(raw.begin(), raw.end());
  } catch (const nlohmann::json::exception& e) {
    throw DataError(manifest_path.string() + ": invalid JSON (" + e.what() + ")");
  }
  if (required<int>(m, "format_version", manifest_path) != kDatasetFormatVersion) {
    throw DataError(manifest_path.string() + ": unsupported format_version");
  }
  if (required<std::string>(m, "dtype", manifest_path) != "f32le") throw DataError(manifest_path.string() + ": dtype must be f32le");
  Dataset ds;
  const auto n = required<std::size_t>(m, "n_samples", manifest_path);
  ds.channels = required<std::size_t>(m, "n_channels", manifest_path);
  ds.length = required<std::size_t>(m, "series_length", manifest_path);
  ds.sample_rate_hz = required<double>(m, "sample_rate_hz", manifest_path);
  ds.label_names = required<std::vector<std::string>>(m, "label_names", manifest_path);
  ds.subject_ids = required<std::vector<std::string>>(m, "subject_ids", manifest_path);
  if (m.contains("split_tags")) ds.split_tags = required<std::vector<std::string>>(m, "split_tags", manifest_path);
  if (ds.label_names.empty()) throw DataError(manifest_path.string() + ": label_names is empty");
  if (ds.subject_ids.size() != n) throw DataError(manifest_path.string() + ": subject_ids length differs from n_samples");
  if (!(ds.sample_rate_hz > 0.0)) throw DataError(manifest_path.string() + ": sample_rate_hz must be positive");

  const fs::path data_path = dir / m.value("data_file", std::string("data.f32"));
  const fs::path labels_path = dir / m.value("labels_file", std::string("labels.u32"));
  const auto data = read_file(data_path);
  const auto labels = read_file(labels_path);
  const std::size_t want = n * ds.channels * ds.length * 4;
  if (data.size() != want) {
    throw DataError(data_path.string() + ": " + std::to_string(data.size()) + " bytes, manifest implies " + std::to_string(want));
  }
  if (labels.size() != n * 4) {
    throw DataError(labels_path.string() + ": " + std::to_string(labels.size()) + " bytes, manifest implies " + std::to_string(n * 4));
  }
  ds.data.resize(n * ds.channels * ds.length);
  for (std::size_t i = 0; i < ds.data.size(); ++i) ds.data[i] = static_cast<double>(get_le<float>(data.data() + 4 * i));
  ds.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) ds.labels[i] = get_le<std::uint32_t>(labels.data() + 4 * i);
  ds.validate();
  return ds;
}

std::string Checkpoint::config_hash() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(config.dump())));
  return buf;
}

Checkpoint make_checkpoint(const ParameterSet& params, std::string kind, nlohmann::json config, std::uint64_t seed,
                           std::uint64_t step) {
  Checkpoint c{std::move(kind), std::move(config), seed, step, {}, {}};
  c.weights.reserve(params.numel());
  for (const auto& [name, t] : params.items()) {
    c.tensors.push_back({name, t.shape(), c.weights.size() * 4});
    for (double v : t.data()) c.weights.push_back(static_cast<float>(v));
  }
  return c;
}

void apply_checkpoint(const Checkpoint& ckpt, ParameterSet& params) {
  for (const auto& [name, t] : params.items()) {
    auto it = std::find_if(ckpt.tensors.begin(), ckpt.tensors.end(), [&](const TensorEntry& e) { return e.name == name; });
    if (it == ckpt.tensors.end()) throw DimensionError("checkpoint has no tensor '" + name + "'");
    if (it->shape != t.shape()) {
      throw DimensionError("tensor '" + name + "': checkpoint shape " + shape_str(it->shape) + " vs model shape " + shape_str(t.shape()));
    }
  }
  for (const auto& e : ckpt.tensors)
    if (!params.contains(e.name)) throw DimensionError("checkpoint tensor '" + e.name + "' does not exist in the model");
  for (const auto& [name, t] : params.items()) {
    const auto& e = *std::find_if(ckpt.tensors.begin(), ckpt.tensors.end(), [&](const TensorEntry& x) { return x.name == name; });
    auto dst = Tensor(t).mutable_data();
    const float* src = ckpt.weights.data() + e.offset / 4;
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<double>(src[i]);
  }
}

std::vector<std::uint8_t> serialize(const Checkpoint& ckpt) {
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& e : ckpt.tensors) tensors.push_back({{"name", e.name}, {"shape", e.shape}, {"offset", e.offset}});
  const nlohmann::json header{{"format_version", kCheckpointFormatVersion},
                              {"provenance",
                               {{"kind", ckpt.kind}, {"config_hash", ckpt.config_hash()}, {"seed", ckpt.seed}, {"step", ckpt.step}}},
                              {"config", ckpt.config},
                              {"tensors", tensors},
                              {"weights_bytes", ckpt.weights.size() * 4}};
  const std::string text = header.dump();
  std::vector<std::uint8_t> out(kMagic, kMagic + 8);
  put_le<std::uint32_t>(out, kCheckpointFormatVersion);
  put_le<std::uint64_t>(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  out.reserve(out.size() + ckpt.weights.size() * 4);
  for (float w : ckpt.weights) put_le(out, w);
  return out;
}

Checkpoint deserialize(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 20 || std::memcmp(bytes.data(), kMagic, 8) != 0) throw IntegrityError("not a checkpoint file");
  if (get_le<std::uint32_t>(bytes.data() + 8) != kCheckpointFormatVersion) throw IntegrityError("unsupported checkpoint version");
  const auto header_len = get_le<std::uint64_t>(bytes.data() + 12);
  if (header_len > bytes.size() - 20) throw IntegrityError("checkpoint header is truncated");
  nlohmann::json h;
  try {
    h = nlohmann::json::parse(bytes.begin() + 20, bytes.begin() + 20 + static_cast<std::ptrdiff_t>(header_len));
  } catch (const nlohmann::json::exception& e) {
    throw IntegrityError(std::string("checkpoint header is not valid JSON: ") + e.what());
  }
  Checkpoint c;
  std::uint64_t weights_bytes = 0;
  try {
    const auto& p = h.at("provenance");
    c.kind = p.at("kind").get<std::string>();
    c.seed = p.at("seed").get<std::uint64_t>();
    c.step = p.at("step").get<std::uint64_t>();
    c.config = h.at("config");
    weights_bytes = h.at("weights_bytes").get<std::uint64_t>();
    for (const auto& t : h.at("tensors"))
      c.tensors.push_back({t.at("name").get<std::string>(), t.at("shape").get<Shape>(), t.at("offset").get<std::uint64_t>()});
    if (p.at("config_hash").get<std::string>() != c.config_hash()) throw IntegrityError("checkpoint config hash mismatch");
  } catch (const nlohmann::json::exception& e) {
    throw IntegrityError(std::string("malformed checkpoint header: ") + e.what());
  }
  const std::size_t body = bytes.size() - 20 - header_len;
  if (body != weights_bytes || weights_bytes % 4 != 0) {
    throw IntegrityError("checkpoint weight block holds " + std::to_string(body) + " bytes, header declares " +
                         std::to_string(weights_bytes));
  }
  // Offsets must tile the weight block in order without gaps or overlap.
  std::uint64_t expect = 0;
  for (const auto& e : c.tensors) {
    if (e.offset != expect) throw IntegrityError("tensor '" + e.name + "' has an unexpected offset");
    expect += shape_numel(e.shape) * 4;
  }
  if (expect != weights_bytes) throw IntegrityError("tensor table does not cover the weight block");
  c.weights.resize(weights_bytes / 4);
  const std::uint8_t* w = bytes.data() + 20 + header_len;
  for (std::size_t i = 0; i < c.weights.size(); ++i) c.weights[i] = get_le<float>(w + 4 * i);
  return c;
}

void save_checkpoint(const fs::path& path, const Checkpoint& ckpt) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_bytes(path, serialize(ckpt));
}

Checkpoint load_checkpoint(const fs::path& path) { return deserialize(read_file(path)); }

}  // namespace tsfm::io
