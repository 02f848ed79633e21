#pragma once

#include <filesystem>
#include <memory>

#include "cgtgait/network.hpp"
#include "json.hpp"

namespace cgt {

/// Layout: 8-byte magic "CGTGCKPT", u32 format version, u64 header length,
/// UTF-8 JSON header, then little-endian float64 payload. The header lists
/// every tensor with its shape and payload offset (in doubles); parameters
/// come first, then the FR prototypes.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::unique_ptr<CGTGait> model;
  nlohmann::json metadata;  // free-form: epoch, accuracy, training config
};

void save_checkpoint(const std::filesystem::path& path, const CGTGait& model,
                     const nlohmann::json& metadata = nlohmann::json::object());

/// Rebuilds the model from the stored config and overwrites every tensor.
/// Throws std::runtime_error on a bad magic, unknown version, truncated
/// payload, or a tensor list that does not match the rebuilt model.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace cgt
