#pragma once

// Checkpoint layout (little-endian):
//   "HIVE"  u16 version
//   u32 length + configuration text (network, loss, proximity, optim sections)
//   u32 tensor count, then per tensor:
//       u16 name length, name bytes, 5 x u32 dims, f32 values
//   u64 optimizer step, u8 has-moments, [per tensor: f32 m, f32 v]
//   u64 rng state, u32 epoch

#include <string>
#include <vector>

#include "hive/config.hpp"
#include "hive/hvol.hpp"
#include "hive/optim.hpp"

namespace hive {

constexpr std::uint16_t kCheckpointVersion = 1;

struct Checkpoint {
  RunConfig config;  // network, loss, proximity and optim sections restored
  Network net;
  OptimState optim;
  std::uint64_t rng_state = 0;
  std::uint32_t epoch = 0;
  std::size_t payload_bytes = 0;  // parameter values only
};

std::vector<char> serialize_checkpoint(const RunConfig& cfg, const Network& net, const OptimState& optim,
                                       std::uint64_t rng_state, std::uint32_t epoch);
/// Throws FormatError naming the field and byte offset.
Checkpoint parse_checkpoint(const std::vector<char>& bytes, const std::string& what = "checkpoint");

void save_checkpoint(const std::string& path, const RunConfig& cfg, const Network& net, const OptimState& optim,
                     std::uint64_t rng_state, std::uint32_t epoch);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace hive
