#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "m2pt/params.hpp"

namespace m2pt {

// Layout (little-endian):
//   "M2PT" | u32 version | u32 count
//   count × { u32 name_len | name | u32 dtype (0 = f32) | u32 rank | rank × u64 dim | f32 payload }
//   u64 echo_len | echo text
inline constexpr char kCheckpointMagic[4] = {'M', '2', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr std::uint32_t kDtypeF32 = 0;

struct Checkpoint {
  ParameterStore<float> params;
  std::string config_echo;
};

std::vector<std::uint8_t> encode_checkpoint(const ParameterStore<float>& params, const std::string& config_echo);
/// Throws FormatError on bad magic/version, truncation or trailing bytes.
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const std::filesystem::path& path, const ParameterStore<float>& params,
                     const std::string& config_echo);
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Replaces every tensor of `target` with the checkpoint's. The name sets and
/// shapes must agree exactly (ConfigError naming the tensor otherwise);
/// `target` is untouched on any error.
std::string load_checkpoint(const std::filesystem::path& path, ParameterStore<float>& target);

}  // namespace m2pt
