#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "cgtgait/checkpoint.hpp"
#include "cgtgait/complexity.hpp"
#include "cgtgait/gradient_suite.hpp"
#include "cgtgait/trainer.hpp"

namespace fs = std::filesystem;
using namespace cgt;

namespace {

std::array<std::size_t, kClasses> parse_counts(const std::string& text) {
  std::array<std::size_t, kClasses> counts{};
  std::stringstream ss(text);
  std::string item;
  std::size_t i = 0;
  while (std::getline(ss, item, ',')) {
    if (i == kClasses) throw CLI::ValidationError("--class-counts", "expects 4 comma-separated counts");
    counts[i++] = std::stoul(item);
  }
  if (i != kClasses) throw CLI::ValidationError("--class-counts", "expects 4 comma-separated counts");
  return counts;
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

// A file holding either a full training config or only its "model" part.
TrainConfig read_config(const std::string& path) {
  if (path.empty()) return TrainConfig{};
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path);
  const auto j = nlohmann::json::parse(in);
  if (!j.contains("model") && (j.contains("blocks") || j.contains("width") || j.contains("heads"))) {
    TrainConfig c;
    c.model = ModelConfig::from_json(j);
    return c;
  }
  return TrainConfig::from_json(j);
}

std::vector<SkeletonSequence> resampled(std::vector<SkeletonSequence> data, std::size_t frames) {
  for (auto& s : data) s = resample(s, frames);
  return data;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"CGTGait gait emotion recognition"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("generate", "Write a synthetic JSONL dataset");
  std::string counts_text = "120,120,120,120", gen_out, gen_config;
  std::uint64_t gen_seed = 0;
  gen->add_option("--class-counts", counts_text, "happy,sad,angry,neutral")->capture_default_str();
  gen->add_option("--seed", gen_seed)->capture_default_str();
  gen->add_option("--out", gen_out)->required();
  gen->add_option("--generator-config", gen_config, "JSON with per-class preset overrides");

  auto* tr = app.add_subcommand("train", "Train and keep the best checkpoint");
  std::string tr_config, tr_data, tr_out;
  tr->add_option("--config", tr_config, "training config JSON (defaults when omitted)");
  tr->add_option("--data", tr_data, "JSONL dataset; overrides the config's data source");
  tr->add_option("--out", tr_out)->required();

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  std::string ev_ckpt, ev_data, ev_report;
  ev->add_option("--checkpoint", ev_ckpt)->required();
  ev->add_option("--data", ev_data)->required();
  ev->add_option("--report", ev_report, "directory for report.json, report.txt and confusion.csv")->required();

  auto* ab = app.add_subcommand("ablate", "Train every variant along one ablation axis");
  std::string ab_config, ab_axis, ab_out;
  std::size_t ab_epochs = 10;
  ab->add_option("--config", ab_config);
  ab->add_option("--axis", ab_axis, "cgt_order|fusion_parts|bcsf_position|block_count|heads")->required();
  ab->add_option("--epochs", ab_epochs)->capture_default_str();
  ab->add_option("--out", ab_out, "JSON report path (a .txt table is written alongside)");

  auto* cx = app.add_subcommand("complexity", "Parameter and FLOP counts per layer");
  std::string cx_config;
  bool cx_json = false;
  cx->add_option("--config", cx_config, "training or model config (full configuration when omitted)");
  cx->add_flag("--json", cx_json);

  auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient suite");
  std::string gc_module = "all";
  std::size_t gc_seeds = 3;
  gc->add_option("--module", gc_module, "all|tensor|graph|transformer|bcsf|network")->capture_default_str();
  gc->add_option("--seeds", gc_seeds, "random draws per tensor operation")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      GeneratorConfig g = gen_config.empty() ? GeneratorConfig{} : GeneratorConfig::from_json_file(gen_config);
      const auto data = generate_dataset(parse_counts(counts_text), gen_seed, g);
      save_dataset(gen_out, data);
      std::cout << "wrote " << data.size() << " sequences to " << gen_out << "\n";
    } else if (*tr) {
      TrainConfig c = read_config(tr_config);
      if (!tr_data.empty()) c.data = DataSource{tr_data};
      TrainOptions opts;
      opts.out_dir = fs::path(tr_out);
      opts.on_epoch = [](const EpochLog& l) {
        std::printf("epoch %3zu  lr %.5f  loss %8.4f  ce %.4f  mse %.4f  fr %.4f  train %.3f  test %.3f  %.1fs\n",
                    l.epoch, l.lr, l.loss, l.ce, l.mse, l.fr, l.train_accuracy, l.test_accuracy, l.seconds);
        std::fflush(stdout);
      };
      write_file(fs::path(tr_out) / "config.json", c.to_json().dump(2) + "\n");
      const auto r = train(c, opts);
      std::cout << "\nbest epoch " << r.best_epoch << "\n" << r.best_report.to_text();
    } else if (*ev) {
      const Checkpoint ck = load_checkpoint(ev_ckpt);
      const auto data = resampled(load_dataset(ev_data), ck.model->config().frames);
      const EvalReport r = evaluate(*ck.model, data);
      const fs::path dir(ev_report);
      write_file(dir / "report.json", r.to_json().dump(2) + "\n");
      write_file(dir / "report.txt", r.to_text());
      write_file(dir / "confusion.csv", r.confusion_csv());
      std::cout << r.to_text();
    } else if (*ab) {
      const AblationReport r = ablate(read_config(ab_config), parse_ablation_axis(ab_axis), ab_epochs);
      if (!ab_out.empty()) {
        write_file(ab_out, r.to_json().dump(2) + "\n");
        write_file(fs::path(ab_out).replace_extension(".txt"), r.to_text());
      }
      std::cout << r.to_text();
    } else if (*cx) {
      const ModelConfig m = cx_config.empty() ? ModelConfig::full() : read_config(cx_config).model;
      const ComplexityReport r = count_complexity(m);
      std::cout << (cx_json ? r.to_json().dump(2) + "\n" : r.to_text());
    } else if (*gc) {
      const auto entries = run_gradient_suite(gc_module, gc_seeds);
      bool ok = true;
      for (const auto& e : entries) {
        std::printf("%-4s %-12s %-24s max rel err %.3e  (tol %.0e, %zu entries)%s%s\n", e.passed() ? "ok" : "FAIL",
                    e.module.c_str(), e.name.c_str(), e.result.max_relative_error, e.tolerance,
                    e.result.entries_checked, e.passed() ? "" : "  worst ", e.passed() ? "" : e.result.worst_parameter.c_str());
        ok = ok && e.passed();
      }
      return ok ? 0 : 1;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
