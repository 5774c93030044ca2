#include "hgns/checkpoint.hpp"

#include <bit>
#include <cinttypes>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>

#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace hgns {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint format requires a little-endian host");

std::string read_text_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary | std::ios::ate);
  if (!is) throw std::runtime_error("checkpoint: missing file " + path);
  auto bytes = static_cast<std::streamsize>(is.tellg());
  std::string text(static_cast<size_t>(bytes), '\0');
  is.seekg(0);
  is.read(text.data(), bytes);
  if (!is) throw std::runtime_error("checkpoint: read failure on " + path);
  return text;
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!os) throw std::runtime_error("checkpoint: short write to " + path);
}

std::string hash_to_hex(uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, h);
  return buf;
}

uint64_t hash_from_hex(const std::string& s) {
  if (s.size() != 16 || s.find_first_not_of("0123456789abcdef") != std::string::npos)
    throw std::runtime_error("checkpoint: malformed schema hash \"" + s + "\"");
  return std::stoull(s, nullptr, 16);
}

json parse_json(const std::string& text, const std::string& path) {
  try {
    return json::parse(text);
  } catch (const json::exception&) {
    throw std::runtime_error("checkpoint: cannot parse " + path);
  }
}

}  // namespace

void write_tensor_store(const std::string& dir, const std::string& stem,
                        const std::vector<std::pair<std::string, const ad::Tensor*>>& tensors) {
  fs::create_directories(dir);
  json manifest;
  manifest["format"] = "hgns-tensor-store";
  manifest["version"] = 1;
  json list = json::array();
  const std::string bin_path = dir + "/" + stem + ".bin";
  std::ofstream os(bin_path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("checkpoint: cannot open " + bin_path + " for writing");
  int64_t offset = 0;
  for (const auto& [name, t] : tensors) {
    const int64_t bytes = t->numel() * static_cast<int64_t>(sizeof(double));
    list.push_back({{"name", name}, {"shape", t->shape}, {"offset", offset}});
    os.write(reinterpret_cast<const char*>(t->ptr()), static_cast<std::streamsize>(bytes));
    offset += bytes;
  }
  if (!os) throw std::runtime_error("checkpoint: short write to " + bin_path);
  os.close();
  manifest["tensors"] = list;
  write_text_file(dir + "/" + stem + ".json", manifest.dump(2));
}

std::vector<std::pair<std::string, ad::Tensor>> read_tensor_store(const std::string& dir, const std::string& stem) {
  const std::string man_path = dir + "/" + stem + ".json";
  const json manifest = parse_json(read_text_file(man_path), man_path);
  if (!manifest.is_object() || manifest.value("format", "") != "hgns-tensor-store")
    throw std::runtime_error("checkpoint: " + man_path + " is not a tensor store manifest");

  const std::string bin_path = dir + "/" + stem + ".bin";
  std::ifstream is(bin_path, std::ios::binary | std::ios::ate);
  if (!is) throw std::runtime_error("checkpoint: missing file " + bin_path);
  const auto file_bytes = static_cast<int64_t>(is.tellg());

  std::vector<std::pair<std::string, ad::Tensor>> out;
  int64_t expect_offset = 0;
  try {
    for (const json& jt : manifest.at("tensors")) {
      const auto name = jt.at("name").get<std::string>();
      const auto shape = jt.at("shape").get<std::vector<int64_t>>();
      const auto offset = jt.at("offset").get<int64_t>();
      if (offset != expect_offset)
        throw std::runtime_error("checkpoint: non-contiguous offset for \"" + name + "\" in " + man_path);
      ad::Tensor t(shape);
      const int64_t bytes = t.numel() * static_cast<int64_t>(sizeof(double));
      is.seekg(offset);
      is.read(reinterpret_cast<char*>(t.ptr()), static_cast<std::streamsize>(bytes));
      if (!is) throw std::runtime_error("checkpoint: truncated payload in " + bin_path + " at \"" + name + "\"");
      expect_offset = offset + bytes;
      out.emplace_back(name, std::move(t));
    }
  } catch (const json::exception&) {
    throw std::runtime_error("checkpoint: malformed manifest " + man_path);
  }
  if (expect_offset != file_bytes)
    throw std::runtime_error("checkpoint: " + bin_path + " holds " + std::to_string(file_bytes) +
                             " bytes, manifest expects " + std::to_string(expect_offset));
  return out;
}

bool tensor_store_exists(const std::string& dir, const std::string& stem) {
  return fs::exists(dir + "/" + stem + ".json") && fs::exists(dir + "/" + stem + ".bin");
}

void save_checkpoint(const std::string& dir, const HgnsModel& m) {
  fs::create_directories(dir);
  json manifest;
  manifest["format"] = "hgns-checkpoint";
  manifest["version"] = 1;
  manifest["kind"] = model_kind_name(m.kind);
  manifest["schema_hash"] = hash_to_hex(m.schema.hash());
  write_text_file(dir + "/manifest.json", manifest.dump(2));
  write_text_file(dir + "/schema.json", schema_to_json(m.schema));
  write_text_file(dir + "/normalizer.json", normalizer_to_json(m.normalizer));

  std::vector<std::pair<std::string, const ad::Tensor*>> tensors;
  m.visit([&](const std::string& name, const ad::Tensor& t) { tensors.emplace_back(name, &t); });
  write_tensor_store(dir, "params", tensors);
}

HgnsModel load_checkpoint(const std::string& dir) {
  const std::string man_path = dir + "/manifest.json";
  const json manifest = parse_json(read_text_file(man_path), man_path);
  if (!manifest.is_object() || manifest.value("format", "") != "hgns-checkpoint")
    throw std::runtime_error("checkpoint: " + man_path + " is not a checkpoint manifest");
  if (manifest.value("version", 0) != 1)
    throw std::runtime_error("checkpoint: unsupported version in " + man_path);

  ModelKind kind;
  uint64_t stored_hash = 0;
  try {
    kind = model_kind_from_name(manifest.at("kind").get<std::string>());
    stored_hash = hash_from_hex(manifest.at("schema_hash").get<std::string>());
  } catch (const json::exception&) {
    throw std::runtime_error("checkpoint: malformed manifest " + man_path);
  }

  FeatureSchema schema = schema_from_json(read_text_file(dir + "/schema.json"));
  if (schema.hash() != stored_hash)
    throw std::runtime_error("checkpoint: schema hash mismatch in " + dir + " (stored " +
                             hash_to_hex(stored_hash) + ", schema.json hashes to " + hash_to_hex(schema.hash()) +
                             ")");
  Normalizer norm = normalizer_from_json(read_text_file(dir + "/normalizer.json"));

  // skeleton with the right tensor shapes for this kind, then fill from disk
  HgnsModel m = init_hgns_model(kind, schema, norm, 0);
  std::map<std::string, ad::Tensor> stored;
  for (auto& [name, t] : read_tensor_store(dir, "params")) {
    if (!stored.emplace(name, std::move(t)).second)
      throw std::runtime_error("checkpoint: duplicate tensor \"" + name + "\" in " + dir);
  }
  m.visit([&](const std::string& name, ad::Tensor& t) {
    auto it = stored.find(name);
    if (it == stored.end()) throw std::runtime_error("checkpoint: missing tensor \"" + name + "\" in " + dir);
    if (it->second.shape != t.shape)
      throw std::runtime_error("checkpoint: tensor \"" + name + "\" has shape " + it->second.shape_str() +
                               ", model expects " + t.shape_str());
    t = std::move(it->second);
    stored.erase(it);
  });
  if (!stored.empty())
    throw std::runtime_error("checkpoint: unexpected tensor \"" + stored.begin()->first + "\" in " + dir);
  return m;
}

uint64_t checkpoint_schema_hash(const std::string& dir) {
  const std::string man_path = dir + "/manifest.json";
  const json manifest = parse_json(read_text_file(man_path), man_path);
  if (!manifest.is_object() || manifest.value("format", "") != "hgns-checkpoint")
    throw std::runtime_error("checkpoint: " + man_path + " is not a checkpoint manifest");
  try {
    return hash_from_hex(manifest.at("schema_hash").get<std::string>());
  } catch (const json::exception&) {
    throw std::runtime_error("checkpoint: malformed manifest " + man_path);
  }
}

}  // namespace hgns
