#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "cgtgait/affective.hpp"
#include "cgtgait/skeleton.hpp"
#include "cgtgait/synthetic.hpp"
#include "doctest.h"

using namespace cgt;

namespace {

SkeletonSequence random_sequence(std::size_t frames, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  SkeletonSequence s;
  s.id = "rand";
  s.frames.resize(frames);
  for (auto& f : s.frames)
    for (auto& p : f)
      for (auto& c : p) c = u(rng);
  return s;
}

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("cgt_test_" + name);
}

std::string frame_json(std::size_t joints) {
  std::string s = "[";
  for (std::size_t j = 0; j < joints; ++j) s += std::string(j ? "," : "") + "[0.1,0.2,0.3]";
  return s + "]";
}

}  // namespace

TEST_CASE("topology is a 16-joint tree") {
  const auto& topo = SkeletonTopology::standard();
  CHECK(topo.joint_count() == 16);
  CHECK(topo.edges.size() == 15);
  CHECK_NOTHROW(topo.validate());

  SkeletonTopology cyclic = topo;
  cyclic.edges.back() = {joint::kLHand, joint::kRHand};
  CHECK_THROWS_AS(cyclic.validate(), std::invalid_argument);
}

TEST_CASE("emotion labels") {
  CHECK(parse_emotion("angry") == Emotion::kAngry);
  CHECK(emotion_name(Emotion::kSad) == "sad");
  CHECK_THROWS_AS(parse_emotion("bored"), std::invalid_argument);
  CHECK_THROWS_AS(emotion_from_index(4), std::invalid_argument);
}

TEST_CASE("load_dataset round trip and errors") {
  const auto path = temp_file("roundtrip.jsonl");
  std::mt19937_64 rng(3);
  auto seq = generate_synthetic(Emotion::kHappy, rng);
  seq.id = "walk_1";
  save_dataset(path, std::span(&seq, 1));
  const auto loaded = load_dataset(path);
  REQUIRE(loaded.size() == 1);
  CHECK(loaded[0].length() == 240);
  CHECK(loaded[0].id == "walk_1");
  CHECK(loaded[0].label == Emotion::kHappy);
  CHECK(loaded[0].frames == seq.frames);

  {
    std::ofstream(path) << "";
  }
  CHECK(load_dataset(path).empty());

  auto expect_error = [&](const std::string& body, const std::string& needle) {
    {
      std::ofstream os(path);
      os << R"({"id":"ok","label":"sad","frames":[)" << frame_json(16) << "," << frame_json(16) << "]}\n";
      os << body << "\n";
    }
    try {
      load_dataset(path);
      FAIL("expected an error");
    } catch (const std::runtime_error& e) {
      const std::string what = e.what();
      CHECK_MESSAGE(what.find(":2:") != std::string::npos, what);
      CHECK_MESSAGE(what.find(needle) != std::string::npos, what);
    }
  };
  expect_error(R"({"id":"short","label":"sad","frames":[)" + frame_json(15) + "," + frame_json(16) + "]}", "short");
  expect_error(R"({"id":"lbl","label":"bored","frames":[)" + frame_json(16) + "," + frame_json(16) + "]}", "lbl");
  expect_error(R"({"id":"inf","label":"sad","frames":[[[1e999,0,0])" + frame_json(15).substr(1) + "," +
                   frame_json(16) + "]}",
               "inf");
  expect_error(R"({"id":"bad", "label":)", "malformed");
  expect_error(R"({"id":"one","label":"sad","frames":[)" + frame_json(16) + "]}", "one");
  std::filesystem::remove(path);
}

TEST_CASE("resample index formula") {
  auto seq = random_sequence(240, 1);
  const auto r = resample(seq, 48);
  REQUIRE(r.length() == 48);
  for (std::size_t i = 0; i < 48; ++i) CHECK(r.frames[i] == seq.frames[5 * i]);

  auto same = random_sequence(48, 2);
  CHECK(resample(same).frames == same.frames);
  CHECK(resample(resample(same)).frames == same.frames);

  // 27 frames: cyclic extension to 54, then floor(i*54/48) mod 27.
  auto shortseq = random_sequence(27, 3);
  const auto e = resample(shortseq, 48);
  REQUIRE(e.length() == 48);
  for (std::size_t i = 0; i < 48; ++i) CHECK(e.frames[i] == shortseq.frames[(i * 54 / 48) % 27]);
  CHECK(e.frames[47] == shortseq.frames[25]);
  CHECK(e.frames[24] == shortseq.frames[0]);
}

TEST_CASE("augment is rigid and deterministic") {
  auto seq = random_sequence(10, 4);
  CHECK(rigid_transform(seq, {0, 0, 0}, {0, 0, 0}).frames == seq.frames);

  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 a(seed), b(seed);
    const auto x = augment(seq, a);
    CHECK(x.frames == augment(seq, b).frames);
    CHECK(x.label == seq.label);
    for (std::size_t t = 0; t < seq.length(); ++t) {
      for (std::size_t i = 0; i < kJoints; ++i) {
        for (std::size_t j = i + 1; j < kJoints; ++j) {
          auto d = [&](const Frame& f) {
            double s = 0;
            for (int c = 0; c < 3; ++c) s += (f[i][c] - f[j][c]) * (f[i][c] - f[j][c]);
            return std::sqrt(s);
          };
          CHECK(std::abs(d(x.frames[t]) - d(seq.frames[t])) < 1e-6);
        }
      }
    }
  }
}

TEST_CASE("extract_motion oracles") {
  SkeletonSequence still = random_sequence(1, 5);
  still.frames.resize(6, still.frames[0]);
  for (const auto& f : extract_motion(still).frames)
    for (const auto& j : f)
      for (double c : j) CHECK(c == 0.0);

  SkeletonSequence lin, quad;
  lin.frames.resize(6);
  quad.frames.resize(6);
  for (std::size_t t = 0; t < 6; ++t) {
    for (std::size_t j = 0; j < kJoints; ++j) {
      lin.frames[t][j] = {static_cast<double>(t), 0.0, 0.0};
      quad.frames[t][j] = {static_cast<double>(t * t), 0.0, 0.0};
    }
  }
  const auto ml = extract_motion(lin), mq = extract_motion(quad);
  REQUIRE(ml.length() == 6);
  for (std::size_t j = 0; j < kJoints; ++j) {
    CHECK(ml.frames[0][j][0] == 0.0);
    CHECK(mq.frames[0][j][4] == 0.0);
    for (std::size_t t = 2; t < 6; ++t) {
      CHECK(ml.frames[t][j][0] == 1.0);
      CHECK(ml.frames[t][j][3] == 1.0);
      CHECK(ml.frames[t][j][4] == 0.0);
      CHECK(ml.frames[t][j][7] == 0.0);
      CHECK(mq.frames[t][j][4] == 2.0);
      CHECK(mq.frames[t][j][7] == 2.0);
    }
  }
}

TEST_CASE("extract_motion is translation invariant with consistent norms") {
  const auto seq = random_sequence(20, 6);
  const auto m = extract_motion(seq);
  const auto shifted = extract_motion(rigid_transform(seq, {0, 0, 0}, {3.0, -2.0, 0.5}));
  for (std::size_t t = 0; t < seq.length(); ++t) {
    for (std::size_t j = 0; j < kJoints; ++j) {
      const auto& c = m.frames[t][j];
      CHECK(std::abs(c[3] - std::hypot(c[0], c[1], c[2])) < 1e-6);
      CHECK(std::abs(c[7] - std::hypot(c[4], c[5], c[6])) < 1e-6);
      for (std::size_t k = 0; k < kMotionChannels; ++k) CHECK(std::abs(c[k] - shifted.frames[t][j][k]) < 1e-9);
    }
  }
}

TEST_CASE("tensor packing layout") {
  auto a = random_sequence(4, 7), b = random_sequence(4, 8);
  std::vector<SkeletonSequence> batch{a, b};
  const auto x = posture_tensor(batch);
  CHECK(x.shape() == Shape{2, 3, 4, 16});
  CHECK(x.at({1, 2, 3, 5}) == b.frames[3][5][2]);
  std::vector<MotionSequence> mb{extract_motion(a), extract_motion(b)};
  const auto m = motion_tensor(mb);
  CHECK(m.shape() == Shape{2, 8, 4, 16});
  CHECK(m.at({0, 7, 2, 9}) == mb[0].frames[2][9][7]);
  batch[1].frames.pop_back();
  CHECK_THROWS_AS(posture_tensor(batch), ShapeError);
}

TEST_CASE("affective degenerate geometry") {
  SkeletonSequence s;
  s.frames.resize(3);
  for (auto& f : s.frames) {
    for (auto& p : f) p = {0.3, 0.7, -0.2};
    f[joint::kRoot] = {0.0, 0.0, 0.0};
    f[joint::kNeck] = {0.0, 0.5, 0.0};
  }
  const auto a = compute_affective(s);
  const std::size_t d0 = kAffectiveAngles;
  // Distances that avoid root and neck: hand-hand, foot-foot, hands-head.
  for (std::size_t i : {d0 + 0, d0 + 1, d0 + 7, d0 + 8}) CHECK(a[i] == 0.0);
  for (std::size_t i = d0 + kAffectiveDistances; i < kAffectiveDims; ++i) CHECK(std::abs(a[i]) < 1e-12);
  for (double v : a) CHECK(std::isfinite(v));

  for (auto& f : s.frames) f[joint::kNeck] = f[joint::kRoot];
  CHECK_THROWS_AS(compute_affective(s), DegenerateSkeleton);
}

TEST_CASE("affective right-angle elbow") {
  auto s = random_sequence(5, 9);
  for (auto& f : s.frames) {
    const Vec3 e = f[joint::kLElbow];
    f[joint::kLShoulder] = {e[0] + 0.3, e[1], e[2]};
    f[joint::kLHand] = {e[0], e[1] - 0.2, e[2] + 0.0};
  }
  const auto a = compute_affective(s);
  CHECK(a[4] == doctest::Approx(std::numbers::pi / 2).epsilon(1e-12));
}

TEST_CASE("affective invariances and ranges") {
  std::mt19937_64 rng(10);
  for (int k = 0; k < 4; ++k) {
    const auto seq = generate_synthetic(static_cast<Emotion>(k), rng);
    const auto base = compute_affective(seq);
    for (std::size_t i = 0; i < kAffectiveDims; ++i) {
      CHECK(std::isfinite(base[i]));
      CHECK(base[i] >= 0.0);
      if (i < kAffectiveAngles) CHECK(base[i] <= std::numbers::pi);
    }
    auto scaled_seq = seq;
    for (auto& f : scaled_seq.frames)
      for (auto& p : f)
        for (auto& c : p) c *= 2.0;
    const auto moved = rigid_transform(seq, {0.9, -1.3, 2.1}, {5.0, -1.0, 0.25});
    const auto sa = compute_affective(scaled_seq), ma = compute_affective(moved);
    for (std::size_t i = 0; i < kAffectiveDims; ++i) {
      CHECK(sa[i] == doctest::Approx(base[i]).epsilon(1e-9));
      CHECK(ma[i] == doctest::Approx(base[i]).epsilon(1e-9));
    }
  }
}

TEST_CASE("generator determinism and validity") {
  for (int k = 0; k < 4; ++k) {
    std::mt19937_64 a(21), b(21);
    const auto x = generate_synthetic(static_cast<Emotion>(k), a);
    CHECK(x.frames == generate_synthetic(static_cast<Emotion>(k), b).frames);
    CHECK(x.length() == 240);
    CHECK_NOTHROW(validate(x));
  }
  const auto d1 = generate_dataset({3, 2, 1, 0}, 5), d2 = generate_dataset({3, 2, 1, 0}, 5);
  REQUIRE(d1.size() == 6);
  for (std::size_t i = 0; i < d1.size(); ++i) CHECK(d1[i].frames == d2[i].frames);
}

TEST_CASE("sad walks slower than happy") {
  auto mean_speed = [](Emotion e) {
    double s = 0.0;
    std::size_t n = 0;
    std::mt19937_64 rng(11);
    for (int r = 0; r < 20; ++r) {
      const auto m = extract_motion(generate_synthetic(e, rng));
      for (std::size_t t = 1; t < m.length(); ++t)
        for (const auto& j : m.frames[t]) {
          s += j[3];
          ++n;
        }
    }
    return s / static_cast<double>(n);
  };
  CHECK(mean_speed(Emotion::kSad) < mean_speed(Emotion::kHappy));
}

TEST_CASE("generator config overrides") {
  const auto c = GeneratorConfig::from_json_text(
      R"({"frames": 100, "classes": {"sad": {"speed": 0.5, "noise_std": 0.0}}})");
  CHECK(c.frames == 100);
  CHECK(c.presets[1].speed == 0.5);
  CHECK(c.presets[1].noise_std == 0.0);
  CHECK(c.presets[0].speed == GeneratorConfig::default_presets()[0].speed);
  CHECK_THROWS(GeneratorConfig::from_json_text(R"({"classes": {"bored": {}}})"));
}

TEST_CASE("synthetic classes are separable in affective space") {
  const auto data = generate_dataset({60, 60, 60, 60}, 12);
  std::array<std::vector<AffectiveVector>, kClasses> per;
  for (const auto& s : data) per[static_cast<std::size_t>(index_of(s.label))].push_back(compute_affective(s));
  int separable = 0;
  for (std::size_t d = 0; d < kAffectiveDims; ++d) {
    std::array<double, kClasses> m{}, v{};
    for (std::size_t k = 0; k < kClasses; ++k) {
      for (const auto& a : per[k]) m[k] += a[d];
      m[k] /= static_cast<double>(per[k].size());
      for (const auto& a : per[k]) v[k] += (a[d] - m[k]) * (a[d] - m[k]);
      v[k] /= static_cast<double>(per[k].size() - 1);
    }
    bool sep = false;
    for (std::size_t a = 0; a < kClasses; ++a)
      for (std::size_t b = a + 1; b < kClasses; ++b)
        sep = sep || std::abs(m[a] - m[b]) > 2.0 * std::sqrt(0.5 * (v[a] + v[b]));
    separable += sep;
  }
  CHECK(separable >= 5);
}
