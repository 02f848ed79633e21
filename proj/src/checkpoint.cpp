#include "cgtgait/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace cgt {

static_assert(std::endian::native == std::endian::little, "checkpoint payload assumes little-endian doubles");

namespace {

constexpr char kMagic[8] = {'C', 'G', 'T', 'G', 'C', 'K', 'P', 'T'};

struct Entry {
  std::string name;
  Tensor tensor;
};

std::vector<Entry> entries_of(const CGTGait& model) {
  std::vector<Entry> out;
  for (const auto& p : model.registry().parameters()) out.push_back({p.name, p.tensor});
  for (std::size_t i = 0; i < model.prototypes_p.size(); ++i) {
    out.push_back({"prototype.posture.block" + std::to_string(i + 1), model.prototypes_p[i]});
    out.push_back({"prototype.motion.block" + std::to_string(i + 1), model.prototypes_m[i]});
  }
  return out;
}

[[noreturn]] void fail(const std::filesystem::path& path, const std::string& why) {
  throw std::runtime_error("checkpoint " + path.string() + ": " + why);
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const CGTGait& model, const nlohmann::json& metadata) {
  const auto entries = entries_of(model);
  nlohmann::json tensors = nlohmann::json::array();
  std::size_t offset = 0;
  for (const auto& e : entries) {
    tensors.push_back({{"name", e.name}, {"shape", e.tensor.shape()}, {"offset", offset}});
    offset += e.tensor.numel();
  }
  const nlohmann::json header = {{"format", "cgtgait-checkpoint"},
                                 {"version", kCheckpointVersion},
                                 {"config", model.config().to_json()},
                                 {"seed", model.seed()},
                                 {"tensors", tensors},
                                 {"payload_doubles", offset},
                                 {"metadata", metadata}};
  const std::string text = header.dump();
  const std::uint64_t header_len = text.size();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(path, "cannot open for writing");
  out.write(kMagic, sizeof kMagic);
  out.write(reinterpret_cast<const char*>(&kCheckpointVersion), sizeof kCheckpointVersion);
  out.write(reinterpret_cast<const char*>(&header_len), sizeof header_len);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& e : entries) {
    const auto d = e.tensor.data();
    out.write(reinterpret_cast<const char*>(d.data()), static_cast<std::streamsize>(d.size_bytes()));
  }
  if (!out) fail(path, "write failed");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(path, "cannot open");
  char magic[8];
  std::uint32_t version = 0;
  std::uint64_t header_len = 0;
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0) fail(path, "not a CGTGait checkpoint");
  in.read(reinterpret_cast<char*>(&version), sizeof version);
  if (!in || version != kCheckpointVersion) {
    fail(path, "unsupported format version " + std::to_string(version));
  }
  in.read(reinterpret_cast<char*>(&header_len), sizeof header_len);
  if (!in || header_len > (std::uint64_t{1} << 32)) fail(path, "corrupt header length");
  std::string text(header_len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(header_len));
  if (!in) fail(path, "truncated header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(path, std::string("bad header: ") + e.what());
  }

  Checkpoint ck;
  ck.model = std::make_unique<CGTGait>(ModelConfig::from_json(header.at("config")),
                                       header.at("seed").get<std::uint64_t>());
  ck.metadata = header.value("metadata", nlohmann::json::object());

  auto entries = entries_of(*ck.model);
  const auto& listed = header.at("tensors");
  if (listed.size() != entries.size()) {
    fail(path, "holds " + std::to_string(listed.size()) + " tensors, model expects " +
                   std::to_string(entries.size()));
  }
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& meta = listed[i];
    const auto name = meta.at("name").get<std::string>();
    if (name != entries[i].name || meta.at("shape").get<Shape>() != entries[i].tensor.shape()) {
      fail(path, "tensor " + std::to_string(i) + " is '" + name + "', model expects '" + entries[i].name + "' " +
                     to_string(entries[i].tensor.shape()));
    }
  }
  for (std::size_t i = 0; i < entries.size(); ++i) {
    Tensor& t = entries[i].tensor;
    std::vector<double> values(t.numel());
    in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(double)));
    if (!in) fail(path, "truncated payload at '" + entries[i].name + "'");
    auto dst = t.mutable_data();
    std::copy(values.begin(), values.end(), dst.begin());
  }
  in.peek();
  if (!in.eof()) fail(path, "trailing bytes after payload");
  return ck;
}

}  // namespace cgt
