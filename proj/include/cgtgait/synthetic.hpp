#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <random>
#include <vector>

#include "cgtgait/skeleton.hpp"

namespace cgt {

struct GaitPreset {
  double frequency_hz = 1.0;  // stride cycles per second
  double stride_amp = 0.35;   // hip swing amplitude, rad
  double arm_amp = 0.3;       // shoulder swing amplitude, rad
  double slump_rad = 0.05;    // forward trunk pitch
  double speed = 1.1;         // m/s
  double noise_std = 0.01;    // m, per joint per frame
};

struct GeneratorConfig {
  std::array<GaitPreset, kClasses> presets = default_presets();
  std::size_t frames = 240;
  double fps = 60.0;
  // Relative per-sample jitter of every preset value.
  double variability = 0.12;
  // Additive per-sample jitter of the slump angle, rad.
  double slump_jitter = 0.05;

  static std::array<GaitPreset, kClasses> default_presets();
  /// Reads {"frames","fps","variability","slump_jitter","classes":{"sad":{...}}};
  /// absent keys keep their defaults.
  static GeneratorConfig from_json_file(const std::filesystem::path& path);
  static GeneratorConfig from_json_text(const std::string& text);
};

SkeletonSequence generate_synthetic(Emotion label, std::mt19937_64& rng, const GeneratorConfig& config = {});

/// class_counts[k] sequences of class k, interleaved by class, each drawn from
/// its own generator seeded from (seed, index).
std::vector<SkeletonSequence> generate_dataset(const std::array<std::size_t, kClasses>& class_counts,
                                               std::uint64_t seed, const GeneratorConfig& config = {});

}  // namespace cgt
