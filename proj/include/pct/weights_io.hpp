#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "pct/nn.hpp"

namespace pct {

// Binary layout (all integers u32 little-endian):
//   "PCTW" | version | entry count | per entry: name length, UTF-8 name,
//   rank, dims..., raw little-endian float32 values.
inline constexpr char kWeightMagic[4] = {'P', 'C', 'T', 'W'};
inline constexpr std::uint32_t kWeightFormatVersion = 1;

struct WeightEntry {
  std::string name;
  std::vector<std::size_t> dims;
  std::vector<float> values;
};

std::vector<std::uint8_t> encode_weights(std::span<const WeightEntry> entries);
// Throws DataError on bad magic, unsupported version, truncation or trailing bytes.
std::vector<WeightEntry> decode_weights(std::span<const std::uint8_t> bytes);

void write_weight_file(const std::filesystem::path& path, std::span<const WeightEntry> entries);
std::vector<WeightEntry> read_weight_file(const std::filesystem::path& path);

std::vector<WeightEntry> snapshot(std::span<Parameter* const> params);
// Copies entry values into params. Names, order and dims must match exactly,
// otherwise DataError is thrown and no parameter is touched.
void restore(std::span<Parameter* const> params, std::span<const WeightEntry> entries);

}  // namespace pct
