#include "irisseg/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "irisseg/errors.hpp"
#include "irisseg/foundation_adapter.hpp"
#include "irisseg/tiny_ref_net.hpp"

namespace fs = std::filesystem;

namespace irisseg {
namespace {

constexpr char kMagic[8] = {'I', 'R', 'S', 'G', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

std::string get(const Metadata& m, const std::string& key) {
  const auto it = m.find(key);
  if (it == m.end()) throw UserError("checkpoint metadata lacks '" + key + "'");
  return it->second;
}

}  // namespace

fs::path sidecar_path(const fs::path& blob) { return fs::path(blob.string() + ".meta"); }

void write_key_values(const Metadata& values, const fs::path& file) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::binary);
  if (!out) throw IoFailure("cannot write " + file.string());
  for (const auto& [k, v] : values) out << k << '=' << v << '\n';
  if (!out) throw IoFailure("cannot write " + file.string());
}

Metadata read_key_values(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw UserError("cannot open " + file.string());
  Metadata out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw UserError("malformed line in " + file.string() + ": " + line);
    out[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return out;
}

void save_checkpoint(const SegModel& model, const fs::path& blob, Metadata metadata) {
  if (blob.has_parent_path()) fs::create_directories(blob.parent_path());
  const auto params = model.parameters();
  {
    std::ofstream out(blob, std::ios::binary);
    if (!out) throw IoFailure("cannot write checkpoint " + blob.string());
    const std::uint64_t count = params.size();
    out.write(kMagic, sizeof(kMagic));
    out.write(reinterpret_cast<const char*>(&kVersion), sizeof(kVersion));
    out.write(reinterpret_cast<const char*>(&count), sizeof(count));
    out.write(reinterpret_cast<const char*>(params.data()),
              static_cast<std::streamsize>(count * sizeof(float)));
    if (!out) throw IoFailure("cannot write checkpoint " + blob.string());
  }
  metadata["model_kind"] = model.kind();
  metadata["input_resolution"] = std::to_string(model.input_extent().height);
  metadata["parameter_count"] = std::to_string(params.size());
  if (const auto* adapter = dynamic_cast<const FoundationAdapter*>(&model)) {
    for (const auto& [k, v] : adapter->describe()) metadata[k] = v;
  }
  write_key_values(metadata, sidecar_path(blob));
}

std::unique_ptr<SegModel> load_checkpoint(const fs::path& blob, Metadata* metadata) {
  if (!fs::exists(blob)) throw MissingCheckpoint("checkpoint not found: " + blob.string());
  if (!fs::exists(sidecar_path(blob))) {
    throw MissingCheckpoint("checkpoint sidecar not found: " + sidecar_path(blob).string());
  }
  const Metadata meta = read_key_values(sidecar_path(blob));
  const std::string kind = get(meta, "model_kind");
  const int resolution = std::stoi(get(meta, "input_resolution"));

  std::unique_ptr<SegModel> model;
  if (kind == "tiny") {
    TinyRefNetConfig cfg;
    cfg.resolution = resolution;
    if (meta.count("embedding_dim")) cfg.embedding_dim = std::stoi(meta.at("embedding_dim"));
    model = std::make_unique<TinyRefNet>(cfg);
  } else if (kind == "foundation") {
    model = std::make_unique<FoundationAdapter>(FoundationConfig::from_metadata(meta));
  } else {
    throw UserError("unknown model kind '" + kind + "' in " + sidecar_path(blob).string());
  }

  std::ifstream in(blob, std::ios::binary);
  char magic[sizeof(kMagic)];
  std::uint32_t version = 0;
  std::uint64_t count = 0;
  in.read(magic, sizeof(magic));
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  in.read(reinterpret_cast<char*>(&count), sizeof(count));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0 || version != kVersion) {
    throw UserError("not a checkpoint blob: " + blob.string());
  }
  auto params = model->parameters();
  if (count != params.size()) {
    throw ShapeMismatch("checkpoint holds " + std::to_string(count) + " parameters, model expects " +
                        std::to_string(params.size()));
  }
  in.read(reinterpret_cast<char*>(params.data()), static_cast<std::streamsize>(count * sizeof(float)));
  if (!in) throw UserError("truncated checkpoint " + blob.string());
  if (metadata) *metadata = meta;
  return model;
}

}  // namespace irisseg
