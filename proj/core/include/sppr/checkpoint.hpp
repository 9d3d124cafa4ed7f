#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "sppr/lstm.hpp"
#include "sppr/tensor.hpp"

namespace sppr {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointTensor {
  std::string name;
  Shape shape;
  std::vector<double> values;  // row-major
  bool operator==(const CheckpointTensor&) const = default;
};

struct CheckpointNetwork {
  std::string name;
  std::vector<CheckpointTensor> tensors;
  bool operator==(const CheckpointNetwork&) const = default;
};

using Checkpoint = std::vector<CheckpointNetwork>;

// Layout (little-endian): "SPPR", u32 version, u8 network count; per network
// u16 name length + bytes, u32 tensor count; per tensor u16 name length +
// bytes, u8 rank, u32 dims, f64 values; trailing CRC32 of everything before.
std::string serialize_checkpoint(const Checkpoint& checkpoint);
Checkpoint parse_checkpoint(std::string_view bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

CheckpointNetwork to_checkpoint(const std::string& name, const ModelParams& params);

/// Rebuilds parameters for `config`; throws CheckpointError naming any
/// missing tensor or shape mismatch.
ModelParams params_from_checkpoint(const CheckpointNetwork& network,
                                   const LstmStackConfig& config);

/// Network by name, or nullptr.
const CheckpointNetwork* find_network(const Checkpoint& checkpoint, std::string_view name);

}  // namespace sppr
