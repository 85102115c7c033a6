#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "dsanet/model.hpp"

namespace dsanet::model {

// DSAN checkpoint, little-endian:
//   "DSAN" | u32 version=1 | u64 provenance hash | u8 mode (0 train, 1 infer)
//   config: u32 P, u32 k, u32 D, f64 dropout, f64 lambda1, f64 lambda2,
//           f64 learning rate, u32 batch, u32 epochs, u64 seed
//   partition: u32 M, u32 L, u32 N, N x (u32 size, size x u32 band),
//              u32 label count (0 or L), labels as u32
//   u32 array count, then per array in DSANetModel::state() order:
//           u32 rank, rank x u32 dims, float64 values
std::vector<unsigned char> encode_checkpoint(const DSANetModel& model);
DSANetModel decode_checkpoint(std::span<const unsigned char> bytes);

void save_checkpoint(const DSANetModel& model, const std::filesystem::path& path);
DSANetModel load_checkpoint(const std::filesystem::path& path);

// The config section of the checkpoint on its own.
std::vector<unsigned char> encode_config(const ModelConfig& config);

}  // namespace dsanet::model
