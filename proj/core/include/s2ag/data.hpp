// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "s2ag/features.hpp"
#include "s2ag/skeleton.hpp"

namespace s2ag {

inline constexpr std::uint32_t kDatasetVersion = 1;

/// One clip: 2T pose frames (seed then target), with the audio and words of
/// the target window.
struct DatasetRecord {
  Waveform waveform;
  std::vector<std::string> transcript;
  std::size_t speaker_id = 0;
  PoseSequence pose;
  std::vector<double> bone_lengths;

  bool operator==(const DatasetRecord&) const = default;
};

struct Dataset {
  std::size_t speakers = 0;
  std::size_t frames = 0;  // T; each record holds 2T pose frames
  double fps = 15.0;
  std::vector<DatasetRecord> records;

  void validate() const;
  bool operator==(const Dataset&) const = default;
};

/// Layout (little-endian): "S2AG", u32 version, u32 S, u32 T, f64 fps,
/// u64 record count, then per record a u64 byte length followed by the body.
std::vector<unsigned char> serialize(const Dataset& ds);
Dataset deserialize(const std::vector<unsigned char>& bytes);
void save_dataset(const std::filesystem::path& path, const Dataset& ds);
Dataset load_dataset(const std::filesystem::path& path);

struct SyntheticConfig {
  std::size_t speakers = 4;
  std::size_t records = 64;
  std::size_t frames = 34;
  double fps = 15.0;
  double sample_rate = 16000.0;
  std::uint64_t seed = 7;
};

/// Procedural clips: each speaker has its own swing rate, reach and posture;
/// a per-clip energy envelope scales both the voice amplitude and the
/// gesture amplitude. Values are rounded to float so files roundtrip exactly.
Dataset generate_synthetic(const SyntheticConfig& cfg);

struct SplitIndices {
  std::vector<std::size_t> train, val, test;
};

/// Seeded shuffle then consecutive slices; sizes are floor(r*n) for train and
/// val, the remainder goes to test.
SplitIndices split(std::size_t count, const std::array<double, 3>& ratios = {0.8, 0.1, 0.1}, std::uint64_t seed = 1);

}  // namespace s2ag
