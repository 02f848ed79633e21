#include "cgtgait/affective.hpp"

#include <cmath>

namespace cgt {

namespace {

Vec3 sub(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
Vec3 add(const Vec3& a, const Vec3& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
Vec3 scaled(const Vec3& a, double s) { return {a[0] * s, a[1] * s, a[2] * s}; }
double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}
double length(const Vec3& a) { return std::sqrt(dot(a, a)); }

Vec3 unit(const Vec3& a) {
  const double l = length(a);
  return l > 0.0 ? scaled(a, 1.0 / l) : Vec3{0.0, 0.0, 0.0};
}

// Unsigned angle in [0, pi]; zero vectors give 0.
double angle(const Vec3& a, const Vec3& b) { return std::atan2(length(cross(a, b)), dot(a, b)); }

double triangle_area(const Vec3& a, const Vec3& b, const Vec3& c) {
  return 0.5 * length(cross(sub(b, a), sub(c, a)));
}

// Removes the component of v along the unit vector n.
Vec3 reject(const Vec3& v, const Vec3& n) { return sub(v, scaled(n, dot(v, n))); }

}  // namespace

const std::array<std::string_view, kAffectiveDims>& affective_names() {
  static const std::array<std::string_view, kAffectiveDims> names = {
      "head_tilt",        "spine_lean",        "l_shoulder_abduction", "r_shoulder_abduction",
      "l_elbow_flexion",  "r_elbow_flexion",   "l_hip_flexion",        "r_hip_flexion",
      "l_knee_flexion",   "r_knee_flexion",    "l_arm_swing",          "r_arm_swing",
      "stride_angle",     "head_spine_angle",  "hand_hand",            "foot_foot",
      "l_hand_root",      "r_hand_root",       "l_foot_root",          "r_foot_root",
      "head_root",        "l_hand_head",       "r_hand_head",          "area_neck_hands",
      "area_root_feet",   "area_head_hands",   "area_root_hands",      "area_neck_feet",
      "area_head_feet",   "area_root_knees",   "area_neck_elbows"};
  return names;
}

AffectiveVector compute_affective(const SkeletonSequence& seq) {
  using namespace joint;
  const std::size_t t_len = seq.frames.size();
  if (t_len == 0) throw DegenerateSkeleton("compute_affective: empty sequence '" + seq.id + "'");

  double spine_len = 0.0;
  Vec3 up{0.0, 0.0, 0.0};
  for (const auto& f : seq.frames) {
    spine_len += length(sub(f[kNeck], f[kRoot]));
    const Vec3 mid_feet = scaled(add(f[kLFoot], f[kRFoot]), 0.5);
    up = add(up, sub(f[kRoot], mid_feet));
  }
  spine_len /= static_cast<double>(t_len);
  if (!(spine_len > 1e-6)) {
    throw DegenerateSkeleton("compute_affective: degenerate root-neck length in '" + seq.id + "'");
  }
  up = unit(up);
  const Vec3 down = scaled(up, -1.0);
  const double inv_l = 1.0 / spine_len;
  const double inv_l2 = inv_l * inv_l;

  AffectiveVector acc{};
  for (const auto& f : seq.frames) {
    std::array<double, kAffectiveDims> v{};
    const Vec3 trunk = sub(f[kNeck], f[kRoot]);
    const Vec3 trunk_down = scaled(trunk, -1.0);
    // Body frame: lateral axis from the shoulder line, sagittal normal to it.
    const Vec3 lateral = unit(reject(sub(f[kLShoulder], f[kRShoulder]), up));

    auto arm_planes = [&](std::size_t shoulder, std::size_t elbow) {
      const Vec3 arm = sub(f[elbow], f[shoulder]);
      const Vec3 sagittal = reject(arm, lateral);
      const Vec3 sagittal_trunk = reject(trunk_down, lateral);
      const Vec3 forward = cross(lateral, up);
      const Vec3 frontal = reject(arm, forward);
      return std::pair{angle(frontal, down), angle(sagittal, sagittal_trunk)};
    };
    const auto [l_abd, l_swing] = arm_planes(kLShoulder, kLElbow);
    const auto [r_abd, r_swing] = arm_planes(kRShoulder, kRElbow);

    v[0] = angle(sub(f[kHead], f[kNeck]), up);
    v[1] = angle(trunk, up);
    v[2] = l_abd;
    v[3] = r_abd;
    v[4] = angle(sub(f[kLShoulder], f[kLElbow]), sub(f[kLHand], f[kLElbow]));
    v[5] = angle(sub(f[kRShoulder], f[kRElbow]), sub(f[kRHand], f[kRElbow]));
    v[6] = angle(sub(f[kLKnee], f[kLHip]), trunk_down);
    v[7] = angle(sub(f[kRKnee], f[kRHip]), trunk_down);
    v[8] = angle(sub(f[kLHip], f[kLKnee]), sub(f[kLFoot], f[kLKnee]));
    v[9] = angle(sub(f[kRHip], f[kRKnee]), sub(f[kRFoot], f[kRKnee]));
    v[10] = l_swing;
    v[11] = r_swing;
    v[12] = angle(sub(f[kLKnee], f[kLHip]), sub(f[kRKnee], f[kRHip]));
    v[13] = angle(sub(f[kHead], f[kNeck]), trunk);

    auto dist = [&](std::size_t a, std::size_t b) { return length(sub(f[a], f[b])) * inv_l; };
    v[14] = dist(kLHand, kRHand);
    v[15] = dist(kLFoot, kRFoot);
    v[16] = dist(kLHand, kRoot);
    v[17] = dist(kRHand, kRoot);
    v[18] = dist(kLFoot, kRoot);
    v[19] = dist(kRFoot, kRoot);
    v[20] = dist(kHead, kRoot);
    v[21] = dist(kLHand, kHead);
    v[22] = dist(kRHand, kHead);

    auto area = [&](std::size_t a, std::size_t b, std::size_t c) {
      return triangle_area(f[a], f[b], f[c]) * inv_l2;
    };
    v[23] = area(kNeck, kLHand, kRHand);
    v[24] = area(kRoot, kLFoot, kRFoot);
    v[25] = area(kHead, kLHand, kRHand);
    v[26] = area(kRoot, kLHand, kRHand);
    v[27] = area(kNeck, kLFoot, kRFoot);
    v[28] = area(kHead, kLFoot, kRFoot);
    v[29] = area(kRoot, kLKnee, kRKnee);
    v[30] = area(kNeck, kLElbow, kRElbow);

    for (std::size_t i = 0; i < kAffectiveDims; ++i) acc[i] += v[i];
  }
  for (auto& a : acc) a /= static_cast<double>(t_len);
  return acc;
}

}  // namespace cgt
