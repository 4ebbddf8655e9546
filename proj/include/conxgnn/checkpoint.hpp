#pragma once

// Single-file binary checkpoints:
//
//   "CONXGNN\0"  u32 version
//   u64 n + n bytes   model configuration (JSON)
//   i32 epoch
//   i64 adam step, f64 lr, beta1, beta2, eps
//   u64 n + n bytes   RNG state (textual engine state)
//   u64 count, then per parameter:
//     u64 n + name, i64 rows, i64 cols, rows*cols f64 (column-major),
//     u8 has_moments [, first moment, second moment]
//
// Integers and doubles are written in host byte order.

#include <filesystem>
#include <random>

#include <json.hpp>

#include "conxgnn/model.hpp"
#include "conxgnn/training.hpp"

namespace conxgnn {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ConxGnn model;
  Adam optimizer;
  int epoch = 0;
  std::mt19937_64 rng;
};

nlohmann::json model_config_to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& j);

void save_checkpoint(const std::filesystem::path& path, const ConxGnn& model, const Adam& optimizer, int epoch,
                     const std::mt19937_64& rng);
/// Throws std::runtime_error on a bad magic/version or a parameter set that
/// does not match the stored configuration.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace conxgnn
