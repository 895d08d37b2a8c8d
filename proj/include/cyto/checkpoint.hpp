#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cyto/mrf_dcn.hpp"
#include "cyto/mtl_unet.hpp"
#include "cyto/named_tensor.hpp"

namespace cyto {

/// On-disk layout (all integers little-endian):
///
///   offset 0   8 bytes  magic "CYTOCKPT"
///   offset 8   u32      format version (1)
///   offset 12  u32      header length L
///   offset 16  L bytes  JSON header {"kind", "format_version", "seed",
///                       "config", "tensors": [{"name", "shape"}...]}
///   16 + L     f32[]    tensor payloads, concatenated in header order
///
/// The file must end exactly after the payload.
inline constexpr uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::string kind;         // "mrf_dcn" or "mtl_unet"
  uint64_t seed = 0;
  std::string config_json;  // model-specific build options
  std::vector<NamedTensor> tensors;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
/// Throws FormatError on bad magic, version, header or size.
Checkpoint load_checkpoint(const std::filesystem::path& path);

void save_checkpoint(const std::filesystem::path& path, const MrfDcn& model);
void save_checkpoint(const std::filesystem::path& path, const MtlUnet& model);
/// Rebuilds the model from the header and copies every parameter; throws
/// ValidationError when the file holds a different model kind.
MrfDcn load_mrf_dcn(const std::filesystem::path& path);
MtlUnet load_mtl_unet(const std::filesystem::path& path);

}  // namespace cyto
