#pragma once

// Versioned checkpoint container.
//
//   offset 0   8 bytes   magic "TRACECKP"
//   offset 8   u32 LE    container version (1)
//   offset 12  u64 LE    header length H in bytes
//   offset 20  H bytes   UTF-8 JSON header
//   then       tensors listed in header["tensors"], in that order, each
//              rows * cols IEEE-754 float32 values, little-endian, row-major
//
// The header records the architecture, the condition channel order and its
// layout version, the noise schedule, the training step, whether the state
// path is active, the dataset coordinate stats and free-form training
// metadata. Tensor groups are "param", "adam_m" and "adam_v".

#include <filesystem>
#include <optional>

#include <json.hpp>

#include "trace/diffusion_math.hpp"
#include "trace/spdm_net.hpp"
#include "trace/training.hpp"

namespace trace {

inline constexpr char kCheckpointMagic[8] = {'T', 'R', 'A', 'C', 'E', 'C', 'K', 'P'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ArchConfig arch;
  NoiseSchedule schedule;
  ModelParams<float> params;
  bool use_state = true;
  long training_step = 0;
  std::optional<AdamState> adam;
  std::optional<CoordStats> coords;
  nlohmann::ordered_json extra = nlohmann::ordered_json::object();
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

nlohmann::ordered_json arch_to_json(const ArchConfig& cfg);
ArchConfig arch_from_json(const nlohmann::json& j);

}  // namespace trace
