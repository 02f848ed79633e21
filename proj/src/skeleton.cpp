#include "cgtgait/skeleton.hpp"

#include <cmath>
#include <fstream>
#include <queue>
#include <regex>
#include <stdexcept>

#include "json.hpp"

namespace cgt {

namespace {

constexpr std::array<std::string_view, kClasses> kEmotionNames = {"happy", "sad", "angry", "neutral"};

}  // namespace

std::string_view emotion_name(Emotion e) { return kEmotionNames.at(static_cast<std::size_t>(e)); }

Emotion parse_emotion(std::string_view name) {
  for (std::size_t i = 0; i < kClasses; ++i) {
    if (kEmotionNames[i] == name) return static_cast<Emotion>(i);
  }
  throw std::invalid_argument("unknown emotion label '" + std::string(name) + "'");
}

Emotion emotion_from_index(int index) {
  if (index < 0 || index >= static_cast<int>(kClasses)) {
    throw std::invalid_argument("emotion index out of range: " + std::to_string(index));
  }
  return static_cast<Emotion>(index);
}

void validate(const SkeletonSequence& seq) {
  if (seq.frames.size() < 2) {
    throw std::invalid_argument("sequence '" + seq.id + "' has fewer than 2 frames");
  }
  for (std::size_t t = 0; t < seq.frames.size(); ++t) {
    for (const auto& p : seq.frames[t]) {
      for (double c : p) {
        if (!std::isfinite(c)) {
          throw std::invalid_argument("sequence '" + seq.id + "' has a non-finite coordinate at frame " +
                                      std::to_string(t));
        }
      }
    }
  }
}

void SkeletonTopology::validate() const {
  const std::size_t n = joint_count();
  if (n == 0 || root >= n) throw std::invalid_argument("topology: invalid root");
  if (edges.size() + 1 != n) {
    throw std::invalid_argument("topology: " + std::to_string(edges.size()) + " edges for " +
                                std::to_string(n) + " joints is not a tree");
  }
  for (auto [a, b] : edges) {
    if (a >= n || b >= n || a == b) throw std::invalid_argument("topology: bad edge");
  }
  const auto d = depths();
  for (auto v : d) {
    if (v == static_cast<std::size_t>(-1)) throw std::invalid_argument("topology: disconnected");
  }
}

std::vector<std::size_t> SkeletonTopology::depths() const {
  const std::size_t n = joint_count();
  std::vector<std::vector<std::size_t>> adj(n);
  for (auto [a, b] : edges) {
    adj[a].push_back(b);
    adj[b].push_back(a);
  }
  std::vector<std::size_t> depth(n, static_cast<std::size_t>(-1));
  std::queue<std::size_t> q;
  depth[root] = 0;
  q.push(root);
  while (!q.empty()) {
    const std::size_t u = q.front();
    q.pop();
    for (auto v : adj[u]) {
      if (depth[v] == static_cast<std::size_t>(-1)) {
        depth[v] = depth[u] + 1;
        q.push(v);
      }
    }
  }
  return depth;
}

const SkeletonTopology& SkeletonTopology::standard() {
  static const SkeletonTopology topo = [] {
    SkeletonTopology t;
    t.names = {"root",       "spine",     "neck",   "head",   "l_shoulder", "l_elbow",
               "l_hand",     "r_shoulder", "r_elbow", "r_hand", "l_hip",      "l_knee",
               "l_foot",     "r_hip",     "r_knee", "r_foot"};
    using namespace joint;
    t.edges = {{kRoot, kSpine},        {kSpine, kNeck},       {kNeck, kHead},
               {kNeck, kLShoulder},    {kLShoulder, kLElbow}, {kLElbow, kLHand},
               {kNeck, kRShoulder},    {kRShoulder, kRElbow}, {kRElbow, kRHand},
               {kRoot, kLHip},         {kLHip, kLKnee},       {kLKnee, kLFoot},
               {kRoot, kRHip},         {kRHip, kRKnee},       {kRKnee, kRFoot}};
    t.root = kRoot;
    t.validate();
    return t;
  }();
  return topo;
}

std::vector<SkeletonSequence> load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset " + path.string());
  std::vector<SkeletonSequence> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto fail = [&](const std::string& id, const std::string& why) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": record '" + id +
                               "': " + why);
    };
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      // Best-effort id for the message when the record does not parse.
      static const std::regex id_re(R"re("id"\s*:\s*"([^"]*)")re");
      std::smatch m;
      fail(std::regex_search(line, m, id_re) ? m[1].str() : "?", std::string("malformed JSON: ") + e.what());
    }
    const std::string id = rec.contains("id") && rec["id"].is_string() ? rec["id"].get<std::string>() : "?";
    if (!rec.is_object() || !rec.contains("label") || !rec["label"].is_string() ||
        !rec.contains("frames") || !rec["frames"].is_array()) {
      fail(id, "expected object with string 'id', string 'label' and array 'frames'");
    }
    SkeletonSequence seq;
    seq.id = id;
    try {
      seq.label = parse_emotion(rec["label"].get<std::string>());
    } catch (const std::invalid_argument& e) {
      fail(id, e.what());
    }
    const auto& frames = rec["frames"];
    seq.frames.resize(frames.size());
    for (std::size_t t = 0; t < frames.size(); ++t) {
      const auto& f = frames[t];
      if (!f.is_array() || f.size() != kJoints) {
        fail(id, "frame " + std::to_string(t) + " has " + std::to_string(f.is_array() ? f.size() : 0) +
                     " joints, expected 16");
      }
      for (std::size_t j = 0; j < kJoints; ++j) {
        const auto& p = f[j];
        if (!p.is_array() || p.size() != 3) fail(id, "joint entry is not [x,y,z]");
        for (std::size_t c = 0; c < 3; ++c) {
          if (!p[c].is_number()) fail(id, "coordinate is not a number");
          const double v = p[c].get<double>();
          if (!std::isfinite(v)) fail(id, "non-finite coordinate");
          seq.frames[t][j][c] = v;
        }
      }
    }
    try {
      validate(seq);
    } catch (const std::invalid_argument& e) {
      fail(id, e.what());
    }
    out.push_back(std::move(seq));
  }
  return out;
}

void save_dataset(const std::filesystem::path& path, std::span<const SkeletonSequence> sequences) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write dataset " + path.string());
  for (const auto& seq : sequences) {
    nlohmann::json frames = nlohmann::json::array();
    for (const auto& f : seq.frames) {
      nlohmann::json joints = nlohmann::json::array();
      for (const auto& p : f) joints.push_back({p[0], p[1], p[2]});
      frames.push_back(std::move(joints));
    }
    nlohmann::json rec = {{"id", seq.id}, {"label", emotion_name(seq.label)}, {"frames", std::move(frames)}};
    os << rec.dump() << '\n';
  }
}

SkeletonSequence resample(const SkeletonSequence& seq, std::size_t target_frames) {
  if (seq.frames.size() < 2 || target_frames < 2) {
    throw std::invalid_argument("resample needs at least 2 source and target frames");
  }
  const std::size_t t = seq.frames.size();
  SkeletonSequence out;
  out.id = seq.id;
  out.label = seq.label;
  out.frames.reserve(target_frames);
  if (t >= target_frames) {
    for (std::size_t i = 0; i < target_frames; ++i) out.frames.push_back(seq.frames[i * t / target_frames]);
  } else {
    // Cyclic extension to the smallest whole number of periods covering the
    // target, then the same index formula.
    const std::size_t periods = (target_frames + t - 1) / t;
    const std::size_t extended = periods * t;
    for (std::size_t i = 0; i < target_frames; ++i) {
      out.frames.push_back(seq.frames[(i * extended / target_frames) % t]);
    }
  }
  return out;
}

SkeletonSequence rigid_transform(const SkeletonSequence& seq, const Vec3& angles,
                                 const Vec3& translation) {
  const double cx = std::cos(angles[0]), sx = std::sin(angles[0]);
  const double cy = std::cos(angles[1]), sy = std::sin(angles[1]);
  const double cz = std::cos(angles[2]), sz = std::sin(angles[2]);
  // R = Rz * Ry * Rx
  const double r[3][3] = {
      {cz * cy, cz * sy * sx - sz * cx, cz * sy * cx + sz * sx},
      {sz * cy, sz * sy * sx + cz * cx, sz * sy * cx - cz * sx},
      {-sy, cy * sx, cy * cx},
  };
  SkeletonSequence out = seq;
  for (auto& f : out.frames) {
    for (auto& p : f) {
      const Vec3 q = p;
      for (int i = 0; i < 3; ++i) p[i] = r[i][0] * q[0] + r[i][1] * q[1] + r[i][2] * q[2] + translation[i];
    }
  }
  return out;
}

SkeletonSequence augment(const SkeletonSequence& seq, std::mt19937_64& rng, const AugmentConfig& config) {
  std::uniform_real_distribution<double> rot(-config.max_rotation_rad, config.max_rotation_rad);
  std::uniform_real_distribution<double> shift(-config.max_translation, config.max_translation);
  Vec3 angles{}, translation{};
  for (auto& a : angles) a = rot(rng);
  for (auto& s : translation) s = shift(rng);
  return rigid_transform(seq, angles, translation);
}

MotionSequence extract_motion(const SkeletonSequence& seq) {
  if (seq.frames.size() < 2) throw std::invalid_argument("extract_motion needs at least 2 frames");
  const std::size_t t_len = seq.frames.size();
  MotionSequence m;
  m.frames.assign(t_len, {});
  std::vector<Frame> vel(t_len, Frame{});
  for (std::size_t t = 1; t < t_len; ++t) {
    for (std::size_t j = 0; j < kJoints; ++j) {
      for (int c = 0; c < 3; ++c) vel[t][j][c] = seq.frames[t][j][c] - seq.frames[t - 1][j][c];
    }
  }
  for (std::size_t t = 0; t < t_len; ++t) {
    for (std::size_t j = 0; j < kJoints; ++j) {
      auto& out = m.frames[t][j];
      Vec3 acc{};
      if (t >= 1) {
        for (int c = 0; c < 3; ++c) acc[c] = vel[t][j][c] - vel[t - 1][j][c];
      }
      for (int c = 0; c < 3; ++c) {
        out[c] = vel[t][j][c];
        out[4 + c] = acc[c];
      }
      out[3] = std::sqrt(out[0] * out[0] + out[1] * out[1] + out[2] * out[2]);
      out[7] = std::sqrt(out[4] * out[4] + out[5] * out[5] + out[6] * out[6]);
    }
  }
  return m;
}

Tensor posture_tensor(std::span<const SkeletonSequence> batch) {
  if (batch.empty()) throw ShapeError("posture_tensor: empty batch");
  const std::size_t t_len = batch[0].length();
  std::vector<double> v(batch.size() * 3 * t_len * kJoints);
  for (std::size_t b = 0; b < batch.size(); ++b) {
    if (batch[b].length() != t_len) throw ShapeError("posture_tensor: ragged batch");
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t t = 0; t < t_len; ++t) {
        for (std::size_t j = 0; j < kJoints; ++j) {
          v[((b * 3 + c) * t_len + t) * kJoints + j] = batch[b].frames[t][j][c];
        }
      }
    }
  }
  return Tensor({batch.size(), 3, t_len, kJoints}, std::move(v));
}

Tensor motion_tensor(std::span<const MotionSequence> batch) {
  if (batch.empty()) throw ShapeError("motion_tensor: empty batch");
  const std::size_t t_len = batch[0].length();
  std::vector<double> v(batch.size() * kMotionChannels * t_len * kJoints);
  for (std::size_t b = 0; b < batch.size(); ++b) {
    if (batch[b].length() != t_len) throw ShapeError("motion_tensor: ragged batch");
    for (std::size_t c = 0; c < kMotionChannels; ++c) {
      for (std::size_t t = 0; t < t_len; ++t) {
        for (std::size_t j = 0; j < kJoints; ++j) {
          v[((b * kMotionChannels + c) * t_len + t) * kJoints + j] = batch[b].frames[t][j][c];
        }
      }
    }
  }
  return Tensor({batch.size(), kMotionChannels, t_len, kJoints}, std::move(v));
}

}  // namespace cgt
