#include "plc/checkpoint.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <set>

#include "plc/errors.hpp"

namespace plc {

namespace fs = std::filesystem;
using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

NamedTensors snapshot(const std::vector<NamedParameter>& params) {
  NamedTensors out;
  out.reserve(params.size());
  for (const auto& p : params) out.emplace_back(p.name, p.var.value());
  return out;
}

namespace {

struct Entry {
  std::string name;
  Shape shape;
  std::uint64_t offset = 0;
  std::uint64_t count = 0;
};

json describe(const NamedTensors& tensors, std::uint64_t& offset, std::vector<const Tensor*>& order) {
  json list = json::array();
  std::set<std::string> seen;
  for (const auto& [name, t] : tensors) {
    if (!seen.insert(name).second) throw CorruptionError(name, "tensor name appears twice");
    list.push_back({{"name", name}, {"shape", t.shape()}, {"dtype", "float32"}, {"offset", offset}, {"count", t.size()}});
    offset += 4 * t.size();
    order.push_back(&t);
  }
  return list;
}

std::vector<Entry> parse_entries(const json& list) {
  std::vector<Entry> out;
  for (const auto& j : list) {
    Entry e;
    e.name = j.at("name").get<std::string>();
    if (j.at("dtype").get<std::string>() != "float32") throw CorruptionError(e.name, "unsupported dtype");
    e.shape = j.at("shape").get<Shape>();
    e.offset = j.at("offset").get<std::uint64_t>();
    e.count = j.at("count").get<std::uint64_t>();
    if (shape_numel(e.shape) != e.count) throw CorruptionError(e.name, "element count disagrees with shape");
    out.push_back(std::move(e));
  }
  return out;
}

Tensor read_entry(const Entry& e, const std::vector<char>& blob, std::uint64_t& expected_offset) {
  if (e.offset != expected_offset) throw CorruptionError(e.name, "offset is not contiguous with the previous tensor");
  const std::uint64_t bytes = 4 * e.count;
  if (e.offset + bytes > blob.size()) throw CorruptionError(e.name, "blob is truncated");
  Tensor t(e.shape);
  for (std::uint64_t i = 0; i < e.count; ++i) {
    float f;
    std::memcpy(&f, blob.data() + e.offset + 4 * i, 4);
    if (!std::isfinite(f)) throw CorruptionError(e.name, "non-finite value");
    t[i] = f;
  }
  expected_offset += bytes;
  return t;
}

}  // namespace

void save_checkpoint(const fs::path& dir, const Checkpoint& ck) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create checkpoint directory " + dir.string() + ": " + ec.message());

  std::uint64_t offset = 0;
  std::vector<const Tensor*> order;
  json manifest;
  manifest["format"] = "plc-checkpoint";
  manifest["version"] = 1;
  manifest["stage"] = ck.stage;
  manifest["step"] = ck.step;
  manifest["seed"] = ck.seed;
  manifest["frozen"] = ck.frozen;
  manifest["config"] = ck.config;
  manifest["blob"] = kBlobName;
  manifest["parameters"] = describe(ck.parameters, offset, order);
  json opts = json::array();
  for (const auto& [name, tensors] : ck.optimizers) {
    std::uint64_t steps = 0;
    for (const auto& [n, s] : ck.optimizer_steps)
      if (n == name) steps = s;
    opts.push_back({{"name", name}, {"steps", steps}, {"moments", describe(tensors, offset, order)}});
  }
  manifest["optimizers"] = opts;
  manifest["blob_bytes"] = offset;

  std::vector<char> blob(offset);
  std::size_t pos = 0;
  for (const Tensor* t : order) {
    for (std::size_t i = 0; i < t->size(); ++i, pos += 4) {
      const float f = static_cast<float>((*t)[i]);
      std::memcpy(blob.data() + pos, &f, 4);
    }
  }
  {
    std::ofstream out(dir / kBlobName, std::ios::binary | std::ios::trunc);
    out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    if (!out) throw ConfigError("cannot write " + (dir / kBlobName).string());
  }
  std::ofstream out(dir / kManifestName, std::ios::trunc);
  out << manifest.dump(2) << '\n';
  if (!out) throw ConfigError("cannot write " + (dir / kManifestName).string());
}

Checkpoint load_checkpoint(const fs::path& dir) {
  std::ifstream in(dir / kManifestName);
  if (!in) throw ConfigError("no checkpoint manifest at " + (dir / kManifestName).string());
  json manifest;
  try {
    manifest = json::parse(in);
  } catch (const json::exception& e) {
    throw CorruptionError(kManifestName, e.what());
  }
  std::ifstream bin(dir / kBlobName, std::ios::binary);
  if (!bin) throw ConfigError("no checkpoint blob at " + (dir / kBlobName).string());
  std::vector<char> blob((std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());

  Checkpoint ck;
  try {
    if (manifest.at("format") != "plc-checkpoint") throw CorruptionError(kManifestName, "unknown format");
    ck.stage = manifest.at("stage").get<std::string>();
    ck.step = manifest.at("step").get<std::uint64_t>();
    ck.seed = manifest.at("seed").get<std::uint64_t>();
    ck.frozen = manifest.at("frozen").get<std::vector<std::string>>();
    ck.config = manifest.at("config");
    std::uint64_t offset = 0;
    std::string last = kManifestName;
    for (const Entry& e : parse_entries(manifest.at("parameters"))) {
      ck.parameters.emplace_back(e.name, read_entry(e, blob, offset));
      last = e.name;
    }
    for (const auto& o : manifest.at("optimizers")) {
      const std::string name = o.at("name").get<std::string>();
      NamedTensors moments;
      for (const Entry& e : parse_entries(o.at("moments"))) {
        moments.emplace_back(e.name, read_entry(e, blob, offset));
        last = e.name;
      }
      ck.optimizers.emplace_back(name, std::move(moments));
      ck.optimizer_steps.emplace_back(name, o.at("steps").get<std::uint64_t>());
    }
    if (offset != blob.size() || manifest.at("blob_bytes").get<std::uint64_t>() != blob.size()) {
      throw CorruptionError(last, "blob size disagrees with the manifest");
    }
  } catch (const json::exception& e) {
    throw CorruptionError(kManifestName, e.what());
  }
  return ck;
}

void restore(const NamedTensors& stored, const std::vector<NamedParameter>& params, bool allow_missing) {
  std::map<std::string, const Tensor*> byname;
  for (const auto& [name, t] : stored) byname[name] = &t;
  for (const auto& p : params) {
    auto it = byname.find(p.name);
    if (it == byname.end()) {
      if (allow_missing) continue;
      throw CorruptionError(p.name, "parameter missing from checkpoint");
    }
    if (it->second->shape() != p.var.shape()) {
      throw CorruptionError(p.name, "stored shape " + shape_str(it->second->shape()) + " but model expects " +
                                        shape_str(p.var.shape()));
    }
    Var v = p.var;
    v.mutable_value() = *it->second;
  }
}

}  // namespace plc
