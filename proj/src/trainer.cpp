#include "cgtgait/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include "cgtgait/affective.hpp"
#include "cgtgait/checkpoint.hpp"

namespace cgt {

namespace {

std::string fixed(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

void copy_state(const CGTGait& from, CGTGait& to) {
  const auto& a = from.registry().parameters();
  auto& b = to.registry().parameters();
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto src = a[i].tensor.data();
    auto dst = b[i].tensor.mutable_data();
    std::copy(src.begin(), src.end(), dst.begin());
  }
  for (std::size_t i = 0; i < from.prototypes_p.size(); ++i) {
    to.prototypes_p[i] = from.prototypes_p[i].detach();
    to.prototypes_m[i] = from.prototypes_m[i].detach();
  }
}

std::vector<SkeletonSequence> gather(std::span<const SkeletonSequence> data, std::span<const std::size_t> idx) {
  std::vector<SkeletonSequence> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(data[i]);
  return out;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

}  // namespace

std::vector<SkeletonSequence> DataSource::load() const {
  if (!synthetic()) return load_dataset(path);
  const GeneratorConfig gen =
      generator_config.empty() ? GeneratorConfig{} : GeneratorConfig::from_json_file(generator_config);
  return generate_dataset(class_counts, seed, gen);
}

nlohmann::json DataSource::to_json() const {
  if (!synthetic()) return {{"path", path}};
  nlohmann::json j = {{"synthetic", {{"class_counts", class_counts}, {"seed", seed}}}};
  if (!generator_config.empty()) j["synthetic"]["generator_config"] = generator_config;
  return j;
}

DataSource DataSource::from_json(const nlohmann::json& j) {
  DataSource d;
  for (const auto& [key, value] : j.items()) {
    if (key != "path" && key != "synthetic") throw std::invalid_argument("data source: unknown key '" + key + "'");
  }
  if (j.contains("path")) d.path = j["path"].get<std::string>();
  if (j.contains("synthetic")) {
    const auto& s = j["synthetic"];
    if (s.contains("class_counts")) d.class_counts = s["class_counts"].get<std::array<std::size_t, kClasses>>();
    d.seed = s.value("seed", d.seed);
    d.generator_config = s.value("generator_config", d.generator_config);
  }
  return d;
}

double TrainConfig::lr_at(std::size_t epoch) const {
  if (decay_every == 0) return initial_lr;
  return initial_lr * std::pow(lr_decay, static_cast<double>(epoch / decay_every));
}

void TrainConfig::validate() const {
  if (batch_size < 2) throw std::invalid_argument("train config: batch_size must be at least 2");
  if (!(split_ratio > 0.0 && split_ratio < 1.0)) throw std::invalid_argument("train config: split_ratio must lie in (0, 1)");
  if (!(initial_lr > 0.0)) throw std::invalid_argument("train config: initial_lr must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("train config: momentum must lie in [0, 1)");
  if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw std::invalid_argument("train config: lr_decay must lie in (0, 1]");
  if (!(grad_clip >= 0.0)) throw std::invalid_argument("train config: grad_clip must be non-negative");
  model.validate();
}

nlohmann::json TrainConfig::to_json() const {
  return {{"epochs", epochs},         {"batch_size", batch_size}, {"optimizer", "sgd"},
          {"momentum", momentum},     {"initial_lr", initial_lr}, {"lr_decay", lr_decay},
          {"decay_every", decay_every}, {"grad_clip", grad_clip}, {"seed", seed},           {"split_ratio", split_ratio},
          {"augment", augment}, {"normalize_inputs", normalize_inputs},       {"overfit", overfit},       {"model", model.to_json()},
          {"data", data.to_json()}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  if (j.contains("optimizer") && j["optimizer"] != "sgd") {
    throw std::invalid_argument("train config: only the sgd optimizer is supported");
  }
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.momentum = j.value("momentum", c.momentum);
  c.initial_lr = j.value("initial_lr", c.initial_lr);
  c.lr_decay = j.value("lr_decay", c.lr_decay);
  c.decay_every = j.value("decay_every", c.decay_every);
  c.grad_clip = j.value("grad_clip", c.grad_clip);
  c.seed = j.value("seed", c.seed);
  c.split_ratio = j.value("split_ratio", c.split_ratio);
  c.augment = j.value("augment", c.augment);
  c.normalize_inputs = j.value("normalize_inputs", c.normalize_inputs);
  c.overfit = j.value("overfit", c.overfit);
  if (j.contains("model")) c.model = ModelConfig::from_json(j["model"]);
  if (j.contains("data")) c.data = DataSource::from_json(j["data"]);
  c.validate();
  return c;
}

TrainConfig TrainConfig::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  try {
    return from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

Split stratified_split(std::span<const SkeletonSequence> data, double ratio, std::uint64_t seed) {
  std::array<std::vector<std::size_t>, kClasses> by_class;
  for (std::size_t i = 0; i < data.size(); ++i) by_class[static_cast<std::size_t>(index_of(data[i].label))].push_back(i);
  Split s;
  for (std::size_t k = 0; k < kClasses; ++k) {
    auto& idx = by_class[k];
    std::seed_seq seq{seed, std::uint64_t{k}};
    std::mt19937_64 rng(seq);
    std::shuffle(idx.begin(), idx.end(), rng);
    std::size_t n_train = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(idx.size())));
    if (idx.size() >= 2) n_train = std::clamp<std::size_t>(n_train, 1, idx.size() - 1);
    s.train.insert(s.train.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
    s.test.insert(s.test.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
  }
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

EvalReport score_predictions(std::span<const int> labels, std::span<const int> predictions) {
  if (labels.size() != predictions.size()) throw std::invalid_argument("score_predictions: size mismatch");
  EvalReport r;
  r.samples = labels.size();
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto t = static_cast<std::size_t>(labels[i]), p = static_cast<std::size_t>(predictions[i]);
    if (t >= kClasses || p >= kClasses) throw std::invalid_argument("score_predictions: class index out of range");
    ++r.confusion[t][p];
    ++r.class_counts[t];
    correct += t == p;
  }
  r.accuracy = r.samples ? static_cast<double>(correct) / static_cast<double>(r.samples) : 0.0;
  double f1_sum = 0.0;
  for (std::size_t k = 0; k < kClasses; ++k) {
    std::size_t predicted = 0;
    for (std::size_t t = 0; t < kClasses; ++t) predicted += r.confusion[t][k];
    const double tp = static_cast<double>(r.confusion[k][k]);
    if (r.class_counts[k] == 0) {
      r.warnings.push_back("class '" + std::string(emotion_name(emotion_from_index(static_cast<int>(k)))) +
                           "' is absent from the evaluation set; its F1 counts as 0");
      continue;
    }
    r.class_accuracy[k] = tp / static_cast<double>(r.class_counts[k]);
    const double denom = static_cast<double>(r.class_counts[k] + predicted);
    r.class_f1[k] = denom > 0.0 ? 2.0 * tp / denom : 0.0;
    f1_sum += r.class_f1[k];
  }
  r.macro_f1 = f1_sum / static_cast<double>(kClasses);
  return r;
}

EvalReport evaluate(const CGTGait& model, std::span<const SkeletonSequence> sequences, std::size_t batch_size) {
  if (sequences.empty()) throw std::invalid_argument("evaluate: empty dataset");
  NoGradGuard no_grad;
  std::vector<int> labels, predictions;
  std::vector<SkeletonSequence> chunk;
  for (std::size_t start = 0; start < sequences.size(); start += batch_size) {
    const std::size_t end = std::min(sequences.size(), start + batch_size);
    chunk.clear();
    for (std::size_t i = start; i < end; ++i) {
      chunk.push_back(sequences[i].length() == model.config().frames ? sequences[i]
                                                                      : resample(sequences[i], model.config().frames));
    }
    const Batch b = make_batch(chunk, nullptr, std::vector<AffectiveVector>(chunk.size()));
    const auto pred = predict(model.forward(b));
    labels.insert(labels.end(), b.labels.begin(), b.labels.end());
    predictions.insert(predictions.end(), pred.begin(), pred.end());
  }
  EvalReport r = score_predictions(labels, predictions);
  const auto cx = count_complexity(model.config());
  r.params = cx.params;
  r.flops = cx.flops();
  return r;
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json per_class = nlohmann::json::object();
  for (std::size_t k = 0; k < kClasses; ++k) {
    per_class[std::string(emotion_name(emotion_from_index(static_cast<int>(k))))] = {
        {"count", class_counts[k]}, {"accuracy", class_accuracy[k]}, {"f1", class_f1[k]}};
  }
  return {{"samples", samples},     {"accuracy", accuracy}, {"macro_f1", macro_f1},
          {"per_class", per_class}, {"confusion", confusion}, {"confusion_axes", "rows = truth, columns = prediction"},
          {"warnings", warnings},   {"params", params},     {"flops", flops},
          {"flop_convention", kFlopConvention}};
}

std::string EvalReport::to_text() const {
  std::ostringstream os;
  os << "samples " << samples << "   accuracy " << fixed(accuracy) << "   macro F1 " << fixed(macro_f1) << "\n\n";
  char line[160];
  std::snprintf(line, sizeof line, "%-10s %6s %9s %7s   %6s %6s %6s %6s\n", "class", "count", "accuracy", "F1",
                "happy", "sad", "angry", "neutr");
  os << line;
  for (std::size_t k = 0; k < kClasses; ++k) {
    std::snprintf(line, sizeof line, "%-10s %6zu %9.4f %7.4f   %6zu %6zu %6zu %6zu\n",
                  std::string(emotion_name(emotion_from_index(static_cast<int>(k)))).c_str(), class_counts[k],
                  class_accuracy[k], class_f1[k], confusion[k][0], confusion[k][1], confusion[k][2], confusion[k][3]);
    os << line;
  }
  os << "\n(confusion rows = truth, columns = prediction)\n";
  if (params) os << "parameters " << params << "   FLOPs " << fixed(static_cast<double>(flops) / 1e9, 3) << "G\n";
  for (const auto& w : warnings) os << "warning: " << w << "\n";
  return os.str();
}

std::string EvalReport::confusion_csv() const {
  std::ostringstream os;
  os << "truth\\prediction";
  for (std::size_t k = 0; k < kClasses; ++k) os << ',' << emotion_name(emotion_from_index(static_cast<int>(k)));
  os << '\n';
  for (std::size_t t = 0; t < kClasses; ++t) {
    os << emotion_name(emotion_from_index(static_cast<int>(t)));
    for (std::size_t p = 0; p < kClasses; ++p) os << ',' << confusion[t][p];
    os << '\n';
  }
  return os.str();
}

nlohmann::json EpochLog::to_json() const {
  return {{"epoch", epoch}, {"lr", lr}, {"loss", loss}, {"ce", ce}, {"mse", mse}, {"fr", fr},
          {"train_accuracy", train_accuracy}, {"grad_norm", grad_norm}, {"test_accuracy", test_accuracy}, {"seconds", seconds}};
}

TrainResult train(const TrainConfig& config, std::span<const SkeletonSequence> data, const TrainOptions& options) {
  config.validate();
  if (data.empty()) throw std::invalid_argument("train: empty dataset");
  const std::size_t frames = config.model.frames;

  std::vector<SkeletonSequence> seqs;
  std::vector<AffectiveVector> targets;
  seqs.reserve(data.size());
  for (const auto& s : data) {
    validate(s);
    seqs.push_back(resample(s, frames));
    targets.push_back(compute_affective(seqs.back()));
  }

  Split split;
  if (config.overfit) {
    split.train.resize(seqs.size());
    std::iota(split.train.begin(), split.train.end(), 0);
    split.test = split.train;
  } else {
    split = stratified_split(seqs, config.split_ratio, config.seed);
  }
  std::array<bool, kClasses> present{};
  for (std::size_t i : split.train) present[static_cast<std::size_t>(index_of(seqs[i].label))] = true;
  if (std::count(present.begin(), present.end(), true) < 2) {
    throw std::invalid_argument("train: the training split holds fewer than two classes");
  }
  if (split.test.empty()) throw std::invalid_argument("train: the test split is empty");
  const auto test_set = gather(seqs, split.test);

  ModelConfig model_config = config.model;
  if (config.normalize_inputs) model_config.input_norm = fit_input_norm(gather(seqs, split.train));
  CGTGait model(model_config, config.seed);
  auto& params = model.registry().parameters();
  std::vector<std::vector<double>> velocity(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) velocity[i].assign(params[i].tensor.numel(), 0.0);

  std::mt19937_64 shuffle_rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  std::mt19937_64 augment_rng(config.seed ^ 0xc2b2ae3d27d4eb4fULL);
  const bool augment = config.augment && !config.overfit;

  if (options.out_dir) std::filesystem::create_directories(*options.out_dir);
  std::ofstream log_file;
  if (options.out_dir) log_file.open(*options.out_dir / "log.jsonl", std::ios::trunc);

  TrainResult result;
  result.best_model = std::make_unique<CGTGait>(model_config, config.seed);
  bool have_best = false;
  std::vector<std::size_t> order = split.train;
  const std::size_t batches = order.size() / config.batch_size;
  if (batches == 0) throw std::invalid_argument("train: training split is smaller than one batch");

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    EpochLog log;
    log.epoch = epoch;
    log.lr = config.lr_at(epoch);
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    std::size_t correct = 0, seen = 0;
    for (std::size_t bi = 0; bi < batches; ++bi) {
      std::vector<SkeletonSequence> bs;
      std::vector<AffectiveVector> bt;
      for (std::size_t j = bi * config.batch_size; j < (bi + 1) * config.batch_size; ++j) {
        bs.push_back(seqs[order[j]]);
        bt.push_back(targets[order[j]]);
      }
      const Batch batch = make_batch(bs, augment ? &augment_rng : nullptr, bt);
      const auto out = model.forward(batch);
      const auto loss = model.loss(out, batch.labels, batch.affective);
      model.registry().zero_grad();
      loss.total.backward();
      double norm2 = 0.0;
      for (const auto& p : params) {
        if (!p.tensor.has_grad()) continue;
        for (double g : p.tensor.grad()) norm2 += g * g;
      }
      const double norm = std::sqrt(norm2);
      const double scale = config.grad_clip > 0.0 && norm > config.grad_clip ? config.grad_clip / norm : 1.0;
      log.grad_norm += norm;
      for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& t = params[i].tensor;
        if (!t.has_grad()) continue;
        const auto g = t.grad();
        auto w = t.mutable_data();
        auto& v = velocity[i];
        for (std::size_t e = 0; e < v.size(); ++e) {
          v[e] = config.momentum * v[e] + scale * g[e];
          w[e] -= log.lr * v[e];
        }
      }
      model.commit_prototypes(loss);
      const auto pred = predict(out);
      for (std::size_t j = 0; j < pred.size(); ++j) correct += pred[j] == batch.labels[j];
      seen += pred.size();
      log.loss += loss.total.item();
      log.ce += loss.ce.item();
      log.mse += loss.mse.item();
      log.fr += loss.fr.item();
      ++result.steps;
      if (options.max_steps && result.steps >= options.max_steps) break;
    }
    const double nb = static_cast<double>(seen / config.batch_size);
    log.loss /= nb;
    log.ce /= nb;
    log.mse /= nb;
    log.fr /= nb;
    log.grad_norm /= nb;
    log.train_accuracy = static_cast<double>(correct) / static_cast<double>(seen);
    log.test_accuracy = evaluate(model, test_set, config.batch_size).accuracy;
    if (!std::isfinite(log.loss)) throw std::runtime_error("train: loss diverged at epoch " + std::to_string(epoch));
    if (!have_best || log.test_accuracy > result.best_accuracy) {
      have_best = true;
      result.best_accuracy = log.test_accuracy;
      result.best_epoch = epoch;
      copy_state(model, *result.best_model);
    }
    log.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.log.push_back(log);
    if (log_file) log_file << log.to_json().dump() << '\n' << std::flush;
    if (options.on_epoch) options.on_epoch(log);
    if (options.max_steps && result.steps >= options.max_steps) break;
    if (options.stop_when && options.stop_when(log)) break;
  }

  result.best_report = evaluate(*result.best_model, test_set, config.batch_size);
  if (options.out_dir) {
    const nlohmann::json meta = {{"epoch", result.best_epoch},
                                 {"test_accuracy", result.best_accuracy},
                                 {"train_config", config.to_json()}};
    save_checkpoint(*options.out_dir / "best.ckpt", *result.best_model, meta);
    write_text(*options.out_dir / "report.json", result.best_report.to_json().dump(2) + "\n");
    write_text(*options.out_dir / "report.txt", result.best_report.to_text());
    write_text(*options.out_dir / "confusion.csv", result.best_report.confusion_csv());
  }
  return result;
}

TrainResult train(const TrainConfig& config, const TrainOptions& options) {
  const auto data = config.data.load();
  return train(config, data, options);
}

AblationAxis parse_ablation_axis(std::string_view name) {
  if (name == "cgt_order") return AblationAxis::kCgtOrder;
  if (name == "fusion_parts") return AblationAxis::kFusionParts;
  if (name == "bcsf_position") return AblationAxis::kBcsfPosition;
  if (name == "block_count") return AblationAxis::kBlockCount;
  if (name == "heads") return AblationAxis::kHeads;
  throw std::invalid_argument("unknown ablation axis '" + std::string(name) +
                              "' (cgt_order|fusion_parts|bcsf_position|block_count|heads)");
}

std::string_view to_string(AblationAxis axis) {
  switch (axis) {
    case AblationAxis::kCgtOrder: return "cgt_order";
    case AblationAxis::kFusionParts: return "fusion_parts";
    case AblationAxis::kBcsfPosition: return "bcsf_position";
    case AblationAxis::kBlockCount: return "block_count";
    case AblationAxis::kHeads: return "heads";
  }
  return "?";
}

std::vector<AblationVariant> ablation_variants(const ModelConfig& base, AblationAxis axis) {
  std::vector<AblationVariant> out;
  switch (axis) {
    case AblationAxis::kCgtOrder:
      for (auto order : {BlockOrder::kGraphFirst, BlockOrder::kTransformerFirst, BlockOrder::kParallel}) {
        ModelConfig c = base;
        c.temporal = TemporalKind::kTransformer;
        c.order = order;
        out.push_back({std::string(to_string(order)), c});
      }
      break;
    case AblationAxis::kFusionParts: {
      ModelConfig none = base;
      none.bcsf = false;
      out.push_back({"none", none});
      for (auto [name, tf, sf] : {std::tuple{"TF", true, false}, {"SF", false, true}, {"TF+SF", true, true}}) {
        ModelConfig c = base;
        c.bcsf = true;
        c.fusion = {tf, sf};
        out.push_back({name, c});
      }
      break;
    }
    case AblationAxis::kBcsfPosition:
      for (std::size_t pos = 1; pos <= base.blocks.size(); ++pos) {
        ModelConfig c = base;
        c.bcsf = true;
        c.bcsf_position = pos;
        out.push_back({"after block " + std::to_string(pos), c});
      }
      break;
    case AblationAxis::kBlockCount:
      for (std::size_t count = 3; count <= 6; ++count) {
        ModelConfig c = base;
        c.blocks = ModelConfig::block_plan(base.blocks.front().c_out, count);
        c.bcsf_position = std::min(base.bcsf_position, count);
        out.push_back({std::to_string(count) + " blocks", c});
      }
      break;
    case AblationAxis::kHeads:
      for (std::size_t h : {2u, 4u, 8u, 16u}) {
        ModelConfig c = base;
        c.heads = h;
        out.push_back({"h=" + std::to_string(h), c});
      }
      break;
  }
  for (const auto& v : out) v.model.validate();
  return out;
}

nlohmann::json AblationReport::to_json() const {
  nlohmann::json rows_json = nlohmann::json::array();
  for (const auto& r : rows) {
    rows_json.push_back({{"variant", r.name},
                         {"accuracy", r.accuracy},
                         {"macro_f1", r.macro_f1},
                         {"params", r.params},
                         {"flops", r.flops},
                         {"gflops", static_cast<double>(r.flops) / 1e9},
                         {"seconds", r.seconds}});
  }
  return {{"axis", to_string(axis)}, {"epochs", epochs}, {"flop_convention", kFlopConvention}, {"variants", rows_json}};
}

std::string AblationReport::to_text() const {
  std::size_t width = 7;
  for (const auto& r : rows) width = std::max(width, r.name.size());
  std::ostringstream os;
  os << "axis " << to_string(axis) << ", " << epochs << " epochs\n";
  char line[200];
  std::snprintf(line, sizeof line, "%-*s %9s %9s %11s %9s %9s\n", static_cast<int>(width), "variant", "accuracy",
                "macro F1", "params", "GFLOPs", "seconds");
  os << line;
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%-*s %9.4f %9.4f %11llu %9.4f %9.1f\n", static_cast<int>(width), r.name.c_str(),
                  r.accuracy, r.macro_f1, static_cast<unsigned long long>(r.params),
                  static_cast<double>(r.flops) / 1e9, r.seconds);
    os << line;
  }
  return os.str();
}

AblationReport ablate(const TrainConfig& config, AblationAxis axis, std::size_t epochs) {
  const auto data = config.data.load();
  AblationReport report;
  report.axis = axis;
  report.epochs = epochs;
  for (const auto& v : ablation_variants(config.model, axis)) {
    TrainConfig c = config;
    c.model = v.model;
    c.epochs = epochs;
    const auto t0 = std::chrono::steady_clock::now();
    const auto r = train(c, data);
    const auto cx = count_complexity(v.model);
    report.rows.push_back({v.name, r.best_accuracy, r.best_report.macro_f1, cx.params, cx.flops(),
                           std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()});
  }
  return report;
}

}  // namespace cgt
