#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ovgt/nn.hpp"

namespace ovgt {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class DType : std::uint8_t { kFloat32 = 0, kFloat64 = 1 };

struct CheckpointRecord {
  std::string name;
  DType dtype = DType::kFloat64;
  Shape shape;
  std::vector<double> values;
};

inline constexpr std::uint16_t kCheckpointVersion = 1;

/// "OVGT", u16 version, u32 count, records, then CRC-32 of everything before it.
/// All integers and values are little-endian.
std::vector<std::uint8_t> encode_checkpoint(std::span<const CheckpointRecord> records);
std::vector<std::uint8_t> encode_checkpoint(const ParameterList& params, DType dtype = DType::kFloat64);
std::vector<CheckpointRecord> decode_checkpoint(std::span<const std::uint8_t> bytes);

void write_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path);

void save_checkpoint(const std::filesystem::path& path, const ParameterList& params, DType dtype = DType::kFloat64);
std::vector<CheckpointRecord> load_checkpoint(const std::filesystem::path& path);

/// Copies record values into the matching parameters. Every parameter must be
/// present with the same shape and no record may be left over.
void restore_parameters(const ParameterList& params, std::span<const CheckpointRecord> records);

}  // namespace ovgt
