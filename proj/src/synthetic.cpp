#include "cgtgait/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace cgt {

namespace {

// Unit vector hanging down (-y) rotated forward (+z) by `pitch` and outward
// along x by `roll`.
Vec3 limb_dir(double pitch, double roll) {
  return {std::sin(roll) * std::cos(pitch), -std::cos(roll) * std::cos(pitch), std::sin(pitch)};
}

Vec3 offset(const Vec3& p, const Vec3& d, double len) {
  return {p[0] + d[0] * len, p[1] + d[1] * len, p[2] + d[2] * len};
}

GaitPreset read_preset(const nlohmann::json& j, GaitPreset p) {
  p.frequency_hz = j.value("frequency_hz", p.frequency_hz);
  p.stride_amp = j.value("stride_amp", p.stride_amp);
  p.arm_amp = j.value("arm_amp", p.arm_amp);
  p.slump_rad = j.value("slump_rad", p.slump_rad);
  p.speed = j.value("speed", p.speed);
  p.noise_std = j.value("noise_std", p.noise_std);
  if (p.frequency_hz <= 0.0 || p.noise_std < 0.0) throw std::invalid_argument("generator config: bad preset");
  return p;
}

}  // namespace

std::array<GaitPreset, kClasses> GeneratorConfig::default_presets() {
  return {{
      {1.05, 0.42, 0.45, -0.05, 1.35, 0.01},  // happy
      {0.75, 0.25, 0.12, 0.30, 0.75, 0.01},   // sad
      {1.15, 0.48, 0.30, 0.12, 1.45, 0.01},   // angry
      {0.95, 0.34, 0.28, 0.05, 1.10, 0.01},   // neutral
  }};
}

GeneratorConfig GeneratorConfig::from_json_text(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  GeneratorConfig c;
  c.frames = j.value("frames", c.frames);
  c.fps = j.value("fps", c.fps);
  c.variability = j.value("variability", c.variability);
  c.slump_jitter = j.value("slump_jitter", c.slump_jitter);
  if (c.frames < 2 || c.fps <= 0.0) throw std::invalid_argument("generator config: bad frames/fps");
  if (j.contains("classes")) {
    for (auto& [name, preset] : j["classes"].items()) {
      const auto k = static_cast<std::size_t>(index_of(parse_emotion(name)));
      c.presets[k] = read_preset(preset, c.presets[k]);
    }
  }
  return c;
}

GeneratorConfig GeneratorConfig::from_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open generator config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json_text(ss.str());
}

SkeletonSequence generate_synthetic(Emotion label, std::mt19937_64& rng, const GeneratorConfig& config) {
  using namespace joint;
  constexpr double kPi = std::numbers::pi;
  const GaitPreset& base = config.presets.at(static_cast<std::size_t>(index_of(label)));
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> phase0(0.0, 2.0 * kPi);

  auto jitter = [&](double v) { return v * std::max(0.2, 1.0 + config.variability * gauss(rng)); };
  const double freq = jitter(base.frequency_hz);
  const double stride = jitter(base.stride_amp);
  const double arm = jitter(base.arm_amp);
  const double speed = jitter(base.speed);
  const double slump = base.slump_rad + config.slump_jitter * gauss(rng);
  const double s = std::max(0.7, 1.0 + 0.05 * gauss(rng));
  const double phi0 = phase0(rng);

  SkeletonSequence seq;
  seq.label = label;
  seq.frames.resize(config.frames);
  for (std::size_t t = 0; t < config.frames; ++t) {
    const double tau = static_cast<double>(t) / config.fps;
    const double phi = 2.0 * kPi * freq * tau + phi0;
    Frame& f = seq.frames[t];

    const double bob = 0.05 * s * stride * std::cos(2.0 * phi);
    f[kRoot] = {0.0, 0.95 * s + bob, speed * tau};
    const double pitch = slump + 0.03 * std::sin(2.0 * phi);
    const Vec3 trunk{0.0, std::cos(pitch), std::sin(pitch)};
    f[kSpine] = offset(f[kRoot], trunk, 0.25 * s);
    f[kNeck] = offset(f[kRoot], trunk, 0.5 * s);
    const double head_pitch = pitch + 0.6 * slump;
    f[kHead] = offset(f[kNeck], Vec3{0.0, std::cos(head_pitch), std::sin(head_pitch)}, 0.15 * s);

    for (int side = 0; side < 2; ++side) {
      const double sign = side == 0 ? 1.0 : -1.0;  // left is +x
      const std::size_t sh = side == 0 ? kLShoulder : kRShoulder;
      const std::size_t el = side == 0 ? kLElbow : kRElbow;
      const std::size_t ha = side == 0 ? kLHand : kRHand;
      const std::size_t hp = side == 0 ? kLHip : kRHip;
      const std::size_t kn = side == 0 ? kLKnee : kRKnee;
      const std::size_t ft = side == 0 ? kLFoot : kRFoot;

      const Vec3 neck_drop = offset(f[kNeck], trunk, -0.05 * s);
      f[sh] = {neck_drop[0] + sign * 0.18 * s, neck_drop[1], neck_drop[2]};
      // Arms swing against the leg on the same side.
      const double leg_phase = side == 0 ? phi : phi + kPi;
      const double swing = -arm * std::sin(leg_phase);
      const double bend = 0.25 + 0.8 * arm * (1.0 + std::sin(-leg_phase)) * 0.5;
      f[el] = offset(f[sh], limb_dir(swing, sign * 0.08), 0.28 * s);
      f[ha] = offset(f[el], limb_dir(swing + bend, sign * 0.05), 0.25 * s);

      f[hp] = {f[kRoot][0] + sign * 0.1 * s, f[kRoot][1] - 0.05 * s, f[kRoot][2]};
      const double hip = stride * std::sin(leg_phase);
      const double knee = 0.1 + 1.4 * stride * std::max(0.0, std::cos(leg_phase));
      f[kn] = offset(f[hp], limb_dir(hip, 0.0), 0.45 * s);
      f[ft] = offset(f[kn], limb_dir(hip - knee, 0.0), 0.43 * s);
    }
    if (base.noise_std > 0.0) {
      for (auto& p : f) {
        for (auto& c : p) c += base.noise_std * gauss(rng);
      }
    }
  }
  return seq;
}

std::vector<SkeletonSequence> generate_dataset(const std::array<std::size_t, kClasses>& class_counts,
                                               std::uint64_t seed, const GeneratorConfig& config) {
  std::vector<SkeletonSequence> out;
  std::array<std::size_t, kClasses> made{};
  std::size_t index = 0;
  bool more = true;
  while (more) {
    more = false;
    for (std::size_t k = 0; k < kClasses; ++k) {
      if (made[k] >= class_counts[k]) continue;
      std::seed_seq ss{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                       static_cast<std::uint32_t>(index)};
      std::mt19937_64 rng(ss);
      auto seq = generate_synthetic(static_cast<Emotion>(k), rng, config);
      seq.id = std::string(emotion_name(static_cast<Emotion>(k))) + "_" + std::to_string(made[k]);
      out.push_back(std::move(seq));
      ++made[k];
      ++index;
      more = true;
    }
  }
  return out;
}

}  // namespace cgt
