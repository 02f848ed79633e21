#pragma once

#include <array>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cgtgait/tensor.hpp"

namespace cgt {

inline constexpr std::size_t kJoints = 16;
inline constexpr std::size_t kClasses = 4;
inline constexpr std::size_t kMotionChannels = 8;
inline constexpr std::size_t kModelFrames = 48;

/// Joint indices of the 16-joint layout.
namespace joint {
inline constexpr std::size_t kRoot = 0, kSpine = 1, kNeck = 2, kHead = 3;
inline constexpr std::size_t kLShoulder = 4, kLElbow = 5, kLHand = 6;
inline constexpr std::size_t kRShoulder = 7, kRElbow = 8, kRHand = 9;
inline constexpr std::size_t kLHip = 10, kLKnee = 11, kLFoot = 12;
inline constexpr std::size_t kRHip = 13, kRKnee = 14, kRFoot = 15;
}  // namespace joint

enum class Emotion : int { kHappy = 0, kSad = 1, kAngry = 2, kNeutral = 3 };

std::string_view emotion_name(Emotion e);
/// Throws std::invalid_argument for anything but happy|sad|angry|neutral.
Emotion parse_emotion(std::string_view name);
Emotion emotion_from_index(int index);
inline int index_of(Emotion e) { return static_cast<int>(e); }

using Vec3 = std::array<double, 3>;
using Frame = std::array<Vec3, kJoints>;

struct SkeletonSequence {
  std::string id;
  Emotion label = Emotion::kNeutral;
  std::vector<Frame> frames;

  std::size_t length() const { return frames.size(); }
};

/// Throws std::invalid_argument naming the sequence id when T < 2 or a
/// coordinate is not finite.
void validate(const SkeletonSequence& seq);

/// Per frame and joint: (vx, vy, vz, |v|, ax, ay, az, |a|).
struct MotionSequence {
  std::vector<std::array<std::array<double, kMotionChannels>, kJoints>> frames;

  std::size_t length() const { return frames.size(); }
};

/// Undirected tree over the joints, rooted at `root`.
struct SkeletonTopology {
  std::vector<std::string> names;
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  std::size_t root = 0;

  std::size_t joint_count() const { return names.size(); }
  /// Throws std::invalid_argument unless the edges form a spanning tree.
  void validate() const;
  /// Hop distance of every joint from the root.
  std::vector<std::size_t> depths() const;

  /// The 16-joint layout used throughout the library.
  static const SkeletonTopology& standard();
};

/// JSON-Lines: {"id": ..., "label": ..., "frames": [[[x,y,z] x16] xT]} per line.
/// Throws std::runtime_error with the 1-based line number on any bad record.
std::vector<SkeletonSequence> load_dataset(const std::filesystem::path& path);
void save_dataset(const std::filesystem::path& path, std::span<const SkeletonSequence> sequences);

/// Picks frames floor(i*T/target) after cyclic extension when T < target.
SkeletonSequence resample(const SkeletonSequence& seq, std::size_t target_frames = kModelFrames);

struct AugmentConfig {
  double max_rotation_rad = 17.0 * 3.14159265358979323846 / 180.0;
  double max_translation = 0.1;
};

/// Rotation about x, then y, then z (radians) followed by a translation,
/// applied to every joint of every frame.
SkeletonSequence rigid_transform(const SkeletonSequence& seq, const Vec3& angles,
                                 const Vec3& translation);

/// Random rigid motion: angles uniform in ±max_rotation_rad per axis and
/// translation uniform in ±max_translation per axis.
SkeletonSequence augment(const SkeletonSequence& seq, std::mt19937_64& rng,
                         const AugmentConfig& config = {});

/// Backward differences with zero first entries: v_t = x_t − x_{t−1},
/// a_t = v_t − v_{t−1}.
MotionSequence extract_motion(const SkeletonSequence& seq);

/// Stacks equal-length sequences into [B, 3, T, 16].
Tensor posture_tensor(std::span<const SkeletonSequence> batch);
/// Stacks equal-length motion sequences into [B, 8, T, 16].
Tensor motion_tensor(std::span<const MotionSequence> batch);

}  // namespace cgt
