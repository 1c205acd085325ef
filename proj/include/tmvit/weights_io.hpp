#pragma once

#include <map>
#include <string>

#include "tmvit/model.hpp"

namespace tmvit {

// Container layout: 8-byte magic "TMWT0001", little-endian u64 header length,
// UTF-8 header text, then the payload of little-endian f32 values. Each
// header line reads
//   <name> f32 <d0>x<d1>x... @<byte offset into payload>
// with offsets ascending and covering the payload exactly.
inline constexpr char kWeightMagic[] = "TMWT0001";

// Writes every named tensor. The write goes to a temp file in the same
// directory and is renamed into place, so a crash never leaves a partial file
// at `path`.
void save_weights(const ModelParams& params, const std::string& path);

// Parses the container into name -> tensor without consulting a config.
std::map<std::string, Tensor> load_tensor_map(const std::string& path);

// Assembles full parameters for `cfg`, erroring on missing tensors or shape
// mismatches. Tensor names the config does not require are ignored.
ModelParams load_weights(const std::string& path, const ModelConfig& cfg);

} // namespace tmvit
