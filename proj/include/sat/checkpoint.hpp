#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "sat/model.hpp"

namespace sat {

// SATW weight files. Layout (all integers little-endian):
//
//   bytes 0..3    magic "SATW"
//   bytes 4..7    u32 format version (1)
//   bytes 8..15   u64 header length H
//   bytes 16..    H bytes of UTF-8 JSON header
//   padding       zeros up to the next multiple of 64
//   payload       f32 tensors, row-major, each starting 64-byte aligned
//
// The header lists {name, dtype, shape, byte_offset} per tensor, with offsets
// relative to the payload start. docs/FORMAT.md is the full description.
inline constexpr std::uint32_t kWeightFormatVersion = 1;
inline constexpr std::size_t kPayloadAlignment = 64;

std::vector<std::uint8_t> encode_weights(const WeightSet& w);
void save_weights(const WeightSet& w, const std::filesystem::path& path);

// Validates every tensor against cfg. Missing normalizer tensors leave
// WeightSet::normalizer empty (identity); a missing cls token is an error only
// in cls mode.
WeightSet decode_weights(std::span<const std::uint8_t> bytes, const ModelConfig& cfg);
WeightSet load_weights(const std::filesystem::path& path, const ModelConfig& cfg);

// Deterministic N(0, 0.02^2) init truncated at 2 sigma; norms at 1/0.
WeightSet seeded_init(const ModelConfig& cfg, std::uint64_t seed);

// splitmix64 step, exposed for tests.
std::uint64_t splitmix64(std::uint64_t& state);

} // namespace sat
