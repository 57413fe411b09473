// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>

#include <nlohmann/json.hpp>

#include "s2ag/tensor.hpp"

namespace s2ag::diff {

/// Named-tensor container. Layout: "S2CK", u32 version, u64 header length,
/// JSON header {config, tensors: [{name, shape, offset}]}, then little-endian
/// float32 payload. Offsets are in bytes from the start of the payload.
struct Checkpoint {
  nlohmann::json config = nlohmann::json::object();
  std::map<std::string, Tensor> tensors;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Writes to a temporary sibling then renames over `path`.
void save_checkpoint(const std::filesystem::path& path, const ParameterSet& params, const nlohmann::json& config);
/// Several sets stored in one file; names must be distinct across sets.
void save_checkpoint(const std::filesystem::path& path, std::span<const ParameterSet* const> sets,
                     const nlohmann::json& config);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Copies every parameter of `params` from `ckpt`. Missing names or shape
/// differences throw ShapeMismatch.
void apply_checkpoint(const Checkpoint& ckpt, ParameterSet& params);

/// Rounds every parameter to float32, the precision stored on disk.
void round_to_storage(ParameterSet& params);

}  // namespace s2ag::diff
