#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>

#include "sketchgrasp/model.hpp"

namespace sketchgrasp {

constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct LoadedCheckpoint {
  Model model;
  std::int64_t iteration = 0;
  std::string train_config_json;  // "{}" when absent
  std::string digest;             // hex SHA-256 of the payload
};

/// Layout (little-endian): "SKGRCKPT", u32 version, i64 iteration,
/// u32 length + model config JSON, u32 length + train config JSON, u32 record
/// count, then per record u32 length + name, u32 rank, rank x u32 dims and the
/// float32 values; finally the 32-byte SHA-256 of everything before it.
std::string serialize_checkpoint(const Model& model, std::int64_t iteration,
                                 const std::string& train_config_json = "{}");
LoadedCheckpoint deserialize_checkpoint(const std::string& bytes);

/// Returns the hex digest.
std::string save_checkpoint(const std::filesystem::path& path, const Model& model,
                            std::int64_t iteration, const std::string& train_config_json = "{}");
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace sketchgrasp
