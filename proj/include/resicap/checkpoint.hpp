#pragma once

#include <string>
#include <utility>
#include <vector>

#include "resicap/tensor.hpp"

namespace resicap {

// Binary checkpoint of named tensors. Fixed little-endian layout:
//   magic "RAEC", format version u32, parameter count u32, then per parameter:
//   name length u32, name bytes, rank u32, dims u64 each, values f64 each.
// Writing is deterministic: the same parameters produce the same bytes.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::string& path,
                     const std::vector<std::pair<std::string, Tensor>>& params);

// Returns parameters in file order. Loaded tensors do not require gradients.
std::vector<std::pair<std::string, Tensor>> load_checkpoint(const std::string& path);

}  // namespace resicap
