#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>

#include "adapterlab/registry.hpp"
#include "adapterlab/transformer.hpp"

namespace adapterlab {

inline constexpr int kCheckpointVersion = 1;

// Text manifest (format version, kind, key/value fields, one line per
// tensor with shape, byte offset, byte length and FNV-1a checksum), then
// the tensors as little-endian IEEE-754 doubles in manifest order.
struct CheckpointContents {
  std::string kind;
  std::map<std::string, std::string> fields;
  ParameterMap tensors;
};

std::uint64_t fnv1a64(std::span<const unsigned char> bytes);

void write_checkpoint(const CheckpointContents& contents, const std::filesystem::path& path);
CheckpointContents read_checkpoint(const std::filesystem::path& path);

void save_base_checkpoint(const BaseParameters& base, const std::filesystem::path& path);
// With `expected`, the stored config must match and every tensor must have
// the shape that config implies.
BaseParameters load_base_checkpoint(const std::filesystem::path& path, const ModelConfig* expected = nullptr);

void save_task_checkpoint(const TaskArtifact& artifact, const ModelConfig& config, const std::filesystem::path& path);
TaskArtifact load_task_checkpoint(const std::filesystem::path& path, const ModelConfig& config);

// Human-readable JSON sidecar: seed, strategy, hyperparameters, metrics.
void write_task_meta(const TaskArtifact& artifact, const std::filesystem::path& path);

}  // namespace adapterlab
