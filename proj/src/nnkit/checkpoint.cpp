#include "dtc/nn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "dtc/error.hpp"

namespace dtc::nn {

namespace {

constexpr const char* kMagic = "DTCCKPT1";

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");

nlohmann::json read_header(std::ifstream& in, const std::filesystem::path& path) {
  std::string magic, manifest;
  if (!std::getline(in, magic) || magic != kMagic) {
    throw SchemaError(path.string() + ": not a checkpoint file");
  }
  if (!std::getline(in, manifest)) throw SchemaError(path.string() + ": missing manifest");
  try {
    return nlohmann::json::parse(manifest);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(path.string() + ": bad manifest: " + e.what());
  }
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const NamedTensors& tensors,
                     const nlohmann::json& meta) {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& [name, t] : tensors) entries.push_back({{"name", name}, {"shape", t.shape()}});
  const nlohmann::json manifest = {{"meta", meta}, {"tensors", entries}};

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << kMagic << '\n' << manifest.dump() << '\n';
  for (const auto& [name, t] : tensors) {
    auto d = t.data();
    out.write(reinterpret_cast<const char*>(d.data()), static_cast<std::streamsize>(d.size_bytes()));
  }
  if (!out) throw Error("write failed for " + path.string());
}

nlohmann::json read_checkpoint_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return read_header(in, path);
}

nlohmann::json load_checkpoint(const std::filesystem::path& path, NamedTensors& tensors) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  const auto manifest = read_header(in, path);
  const auto& entries = manifest.at("tensors");
  if (entries.size() != tensors.size()) {
    throw SchemaError(path.string() + ": stores " + std::to_string(entries.size()) +
                      " tensors, model expects " + std::to_string(tensors.size()));
  }
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const auto name = entries[i].at("name").get<std::string>();
    const auto shape = entries[i].at("shape").get<Shape>();
    auto& [want_name, t] = tensors[i];
    if (name != want_name || shape != t.shape()) {
      throw SchemaError(path.string() + ": tensor " + std::to_string(i) + " is " + name + " " +
                        shape_str(shape) + ", model expects " + want_name + " " + shape_str(t.shape()));
    }
  }
  for (auto& [name, t] : tensors) {
    auto d = t.mutable_data();
    in.read(reinterpret_cast<char*>(d.data()), static_cast<std::streamsize>(d.size_bytes()));
    if (in.gcount() != static_cast<std::streamsize>(d.size_bytes())) {
      throw SchemaError(path.string() + ": truncated data for " + name);
    }
  }
  if (in.peek() != std::char_traits<char>::eof()) throw SchemaError(path.string() + ": trailing bytes");
  return manifest.value("meta", nlohmann::json::object());
}

}  // namespace dtc::nn
