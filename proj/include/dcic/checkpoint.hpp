#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dcic/compression.hpp"
#include "dcic/nets.hpp"

namespace dcic {

inline constexpr std::uint16_t kCheckpointVersion = 1;

enum class ModelKind : std::uint8_t { compressor = 1, classifier = 2, segmenter = 3 };
const char* model_kind_name(ModelKind kind);

struct NetworkCheckpoint {
  Network network;
  std::vector<float> mean;  // per-channel input mean, empty when inputs are not centered
  std::uint64_t seed = 0;
};

/// Layout: "DCIC", u16 version, u8 kind, hyperparameters, input means, seed,
/// then u32 count of (name, u32 rank, u32 dims..., f32 data) blobs. All
/// little-endian.
std::vector<std::uint8_t> encode_checkpoint(const CompressionModel& model, std::uint64_t seed);
std::vector<std::uint8_t> encode_checkpoint(const Network& network, const std::vector<float>& mean, std::uint64_t seed);

/// Kind tag of a checkpoint, after checking magic and version.
ModelKind checkpoint_kind(std::span<const std::uint8_t> bytes);

/// `seed` (optional) receives the stored seed.
CompressionModel decode_compressor(std::span<const std::uint8_t> bytes, std::uint64_t* seed = nullptr);
/// `expected` is classifier or segmenter.
NetworkCheckpoint decode_network(std::span<const std::uint8_t> bytes, ModelKind expected);
/// Loads parameters into an existing network; every tensor must match by name and shape.
void decode_parameters_into(std::span<const std::uint8_t> bytes, Network& network);

void save_checkpoint(const std::string& path, const CompressionModel& model, std::uint64_t seed);
void save_checkpoint(const std::string& path, const Network& network, const std::vector<float>& mean, std::uint64_t seed);
CompressionModel load_compressor(const std::string& path);
NetworkCheckpoint load_network(const std::string& path, ModelKind expected);

}  // namespace dcic
