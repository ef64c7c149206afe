#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fpgen/module.hpp"
#include "json.hpp"

namespace fpgen {

enum class CheckpointRole : std::uint32_t { Generator = 0, Critic = 1, SrGenerator = 2, SrDiscriminator = 3 };

std::string_view to_string(CheckpointRole role);

struct NamedTensor {
  std::string name;
  nn::Tensor tensor;
};

struct Checkpoint {
  CheckpointRole role = CheckpointRole::Generator;
  std::uint64_t step = 0;
  std::uint64_t seed = 0;
  std::string config_digest;
  nlohmann::json config;  // architecture config needed to rebuild the network
  std::vector<NamedTensor> tensors;
};

Checkpoint capture_checkpoint(const nn::Module& module, CheckpointRole role, std::uint64_t step, std::uint64_t seed,
                              nlohmann::json config);
void restore_checkpoint(nn::Module& module, const Checkpoint& ckpt);

// Binary layout (host byte order, version 1):
//   "FPGCKPT1" | u32 version | u32 role | u64 step | u64 seed
//   | str digest | str config-json | u32 count | count x (str name | 4 x i32 shape | f32 data)
// where str = u32 length + bytes. A sidecar `<path>.json` carries the metadata.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace fpgen
