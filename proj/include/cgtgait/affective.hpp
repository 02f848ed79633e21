#pragma once

#include <array>
#include <stdexcept>
#include <string_view>

#include "cgtgait/skeleton.hpp"

namespace cgt {

inline constexpr std::size_t kAffectiveDims = 31;
inline constexpr std::size_t kAffectiveAngles = 14;
inline constexpr std::size_t kAffectiveDistances = 9;
inline constexpr std::size_t kAffectiveAreas = 8;

using AffectiveVector = std::array<double, kAffectiveDims>;

class DegenerateSkeleton : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Feature names in output order: 14 angles, 9 distances, 8 areas.
const std::array<std::string_view, kAffectiveDims>& affective_names();

/// Temporal means of per-frame angles (radians), distances (over the mean
/// root-neck length) and triangle areas (over its square). "Vertical" is the
/// sequence-mean direction from the midpoint of the feet to the root, so the
/// whole vector is invariant to rigid motion and uniform scaling.
/// Throws DegenerateSkeleton when the mean root-neck length is <= 1e-6.
AffectiveVector compute_affective(const SkeletonSequence& seq);

}  // namespace cgt
