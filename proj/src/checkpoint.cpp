#include "cyto/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <json.hpp>

#include "cyto/error.hpp"

namespace cyto {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'C', 'Y', 'T', 'O', 'C', 'K', 'P', 'T'};

void put_u32(std::string& out, uint32_t v) {
  char b[4];
  std::memcpy(b, &v, 4);
  out.append(b, 4);
}

uint32_t get_u32(const std::string& in, size_t off) {
  uint32_t v;
  std::memcpy(&v, in.data() + off, 4);
  return v;
}

void copy_into(const std::vector<NamedTensor>& src, const std::vector<NamedTensor>& dst, const std::string& kind) {
  if (src.size() != dst.size()) {
    throw FormatError(kind + " checkpoint holds " + std::to_string(src.size()) + " tensors, model has " +
                      std::to_string(dst.size()));
  }
  for (size_t i = 0; i < src.size(); ++i) {
    if (src[i].name != dst[i].name || src[i].tensor.shape() != dst[i].tensor.shape()) {
      throw FormatError("checkpoint tensor " + src[i].name + nn::shape_to_string(src[i].tensor.shape()) +
                        " does not match model tensor " + dst[i].name + nn::shape_to_string(dst[i].tensor.shape()));
    }
  }
  for (size_t i = 0; i < src.size(); ++i) {
    nn::Tensor t = dst[i].tensor;
    std::copy(src[i].tensor.data().begin(), src[i].tensor.data().end(), t.data().begin());
  }
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  json header;
  header["kind"] = ckpt.kind;
  header["format_version"] = kCheckpointVersion;
  header["seed"] = ckpt.seed;
  header["config"] = ckpt.config_json.empty() ? json::object() : json::parse(ckpt.config_json);
  header["tensors"] = json::array();
  for (const auto& t : ckpt.tensors) header["tensors"].push_back({{"name", t.name}, {"shape", t.tensor.shape()}});
  const std::string htext = header.dump();

  std::string bytes(kMagic, sizeof kMagic);
  put_u32(bytes, kCheckpointVersion);
  put_u32(bytes, static_cast<uint32_t>(htext.size()));
  bytes += htext;
  for (const auto& t : ckpt.tensors) {
    std::span<const float> d = t.tensor.data();
    bytes.append(reinterpret_cast<const char*>(d.data()), d.size_bytes());
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  const std::string bytes(std::istreambuf_iterator<char>(in), {});
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    throw FormatError(path.string() + " is not a checkpoint");
  }
  const uint32_t version = get_u32(bytes, 8);
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version) + " in " + path.string());
  }
  const uint32_t hlen = get_u32(bytes, 12);
  if (bytes.size() < 16ull + hlen) throw FormatError("truncated checkpoint header in " + path.string());

  Checkpoint ckpt;
  size_t expected = 0;
  std::vector<std::pair<std::string, nn::Shape>> layout;
  try {
    const json header = json::parse(bytes.substr(16, hlen));
    ckpt.kind = header.at("kind").get<std::string>();
    ckpt.seed = header.at("seed").get<uint64_t>();
    ckpt.config_json = header.at("config").dump();
    if (header.at("format_version").get<uint32_t>() != version) throw FormatError("header version mismatch");
    for (const auto& t : header.at("tensors")) {
      nn::Shape shape = t.at("shape").get<nn::Shape>();
      expected += nn::shape_numel(shape);
      layout.emplace_back(t.at("name").get<std::string>(), std::move(shape));
    }
  } catch (const json::exception& e) {
    throw FormatError("malformed checkpoint header in " + path.string() + ": " + e.what());
  } catch (const DimensionError& e) {
    throw FormatError("bad tensor shape in checkpoint " + path.string());
  }
  if (bytes.size() != 16ull + hlen + expected * sizeof(float)) {
    throw FormatError("checkpoint " + path.string() + " payload has " + std::to_string(bytes.size() - 16 - hlen) +
                      " bytes, header describes " + std::to_string(expected * sizeof(float)));
  }
  size_t off = 16ull + hlen;
  for (auto& [name, shape] : layout) {
    nn::Tensor t(shape);
    std::memcpy(t.data().data(), bytes.data() + off, t.numel() * sizeof(float));
    off += t.numel() * sizeof(float);
    ckpt.tensors.push_back({name, t});
  }
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const MrfDcn& model) {
  json branches = json::array();
  for (const auto& b : model.branches()) {
    branches.push_back({{"input_side", b.input_side}, {"pool_count", b.pool_count}, {"conv_channels", b.conv_channels}});
  }
  Checkpoint c{"mrf_dcn", model.seed(), json{{"branches", branches}}.dump(), model.named_parameters()};
  save_checkpoint(path, c);
}

void save_checkpoint(const std::filesystem::path& path, const MtlUnet& model) {
  Checkpoint c{"mtl_unet", model.seed(), json{{"input_side", model.input_side()}}.dump(), model.named_parameters()};
  save_checkpoint(path, c);
}

MrfDcn load_mrf_dcn(const std::filesystem::path& path) {
  const Checkpoint c = load_checkpoint(path);
  if (c.kind != "mrf_dcn") throw ValidationError(path.string() + " holds a '" + c.kind + "' model, not mrf_dcn");
  std::array<BranchConfig, 3> branches;
  try {
    const json cfg = json::parse(c.config_json);
    const json& arr = cfg.at("branches");
    if (arr.size() != 3) throw FormatError("mrf_dcn checkpoint must describe 3 branches");
    for (size_t i = 0; i < 3; ++i) {
      branches[i].input_side = arr[i].at("input_side").get<int>();
      branches[i].pool_count = arr[i].at("pool_count").get<int>();
      branches[i].conv_channels = arr[i].at("conv_channels").get<std::array<int, 2>>();
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed mrf_dcn config: ") + e.what());
  }
  MrfDcn model(c.seed, branches);
  copy_into(c.tensors, model.named_parameters(), c.kind);
  return model;
}

MtlUnet load_mtl_unet(const std::filesystem::path& path) {
  const Checkpoint c = load_checkpoint(path);
  if (c.kind != "mtl_unet") throw ValidationError(path.string() + " holds a '" + c.kind + "' model, not mtl_unet");
  int side = 0;
  try {
    side = json::parse(c.config_json).at("input_side").get<int>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed mtl_unet config: ") + e.what());
  }
  MtlUnet model(c.seed, side);
  copy_into(c.tensors, model.named_parameters(), c.kind);
  return model;
}

}  // namespace cyto
