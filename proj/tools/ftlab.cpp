// ftlab: experiment runner.
//
//   ftlab fig1 --seeds 25 --out results
//   ftlab depth --preset smoke --verify
//   ftlab mnist            (needs FINETUNE_LAB_DATA=<dir with the four IDX files>)

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ftlab/harness/config.hpp"
#include "ftlab/harness/experiments.hpp"
#include "ftlab/harness/mnist_correlation.hpp"
#include "ftlab/harness/result_table.hpp"

namespace fh = ftlab::harness;

namespace {

struct Options {
  std::string config_path;
  std::string preset;
  std::string out = "results";
  std::vector<std::string> overrides;
  long long seed = -1;
  long long seeds = -1;
  bool verify = false;
};

fh::Config build_config(const Options& o) {
  fh::Config cfg;
  if (!o.preset.empty()) cfg.merge(fh::preset(o.preset));
  if (!o.config_path.empty()) cfg.merge(fh::Config::load(o.config_path));
  for (const auto& kv : o.overrides) cfg.apply_override(kv);
  if (o.seed >= 0) cfg.set("seed", std::to_string(o.seed));
  if (o.seeds >= 0) cfg.set("seeds", std::to_string(o.seeds));
  return cfg;
}

void report(const fh::ResultTable& t, const fh::Config& cfg, const std::string& out) {
  const auto files = fh::emit(t, cfg, out);
  std::cout << t.experiment << ": " << t.rows.size() << " rows, config " << cfg.hash() << "\n"
            << "  " << files.csv.string() << "\n  " << files.config.string() << "\n  " << files.plot.string() << "\n";
}

int run_synthetic(const std::string& name, const Options& o) {
  fh::Config cfg = build_config(o);
  fh::ResultTable t;
  if (name == "fig1") t = fh::run_fig1(cfg, o.verify);
  else if (name == "depth") t = fh::run_depth_experiment(cfg, o.verify);
  else if (name == "scaling") t = fh::run_scaling_experiment(cfg, o.verify);
  else if (name == "frozen") t = fh::run_frozen_experiment(cfg, o.verify);
  else if (name == "ntk") t = fh::run_ntk_experiment(cfg, o.verify);
  report(t, cfg, o.out);
  return 0;
}

int run_mnist(const Options& o) {
  const auto dir = fh::mnist_dir_from_env();
  if (!dir || !fh::mnist_files_present(*dir)) {
    std::cerr << "mnist: skipped, set FINETUNE_LAB_DATA to a directory containing";
    for (const char* f : fh::kMnistFiles) std::cerr << " " << f;
    std::cerr << "\n";
    return 0;
  }
  fh::Config cfg = build_config(o);
  const fh::MnistData data = fh::load_mnist_dir(*dir);
  const fh::ResultTable t = fh::run_mnist_correlation(cfg, data);
  report(t, cfg, o.out);
  return 0;
}

// Small instances of every synthetic experiment with the inline checks on.
int run_verify(const Options& o) {
  int failed = 0;
  for (const std::string name : {"fig1", "depth", "scaling", "frozen", "ntk"}) {
    fh::Config cfg = fh::preset("smoke");
    if (!o.config_path.empty()) cfg.merge(fh::Config::load(o.config_path));
    for (const auto& kv : o.overrides) cfg.apply_override(kv);
    if (!cfg.has("seeds")) cfg.set("seeds", "2");
    if (name == "frozen") cfg.set("n_grid", "10,50");
    if (name == "depth") cfg.set("gd", "1");
    try {
      fh::ResultTable t;
      if (name == "fig1") t = fh::run_fig1(cfg, true);
      else if (name == "depth") t = fh::run_depth_experiment(cfg, true);
      else if (name == "scaling") t = fh::run_scaling_experiment(cfg, true);
      else if (name == "frozen") t = fh::run_frozen_experiment(cfg, true);
      else t = fh::run_ntk_experiment(cfg, true);
      std::cout << "PASS " << name << " (" << t.rows.size() << " rows)\n";
    } catch (const std::exception& e) {
      std::cout << "FAIL " << name << ": " << e.what() << "\n";
      ++failed;
    }
  }
  return failed == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fine-tuning laboratory: linear, deep linear and two-layer ReLU experiments"};
  app.require_subcommand(1);
  Options o;
  auto add_common = [&o](CLI::App* sub) {
    sub->add_option("--config", o.config_path, "key = value config file")->check(CLI::ExistingFile);
    sub->add_option("--preset", o.preset, "named parameter overlay (fig1, smoke)");
    sub->add_option("--out", o.out, "output directory");
    sub->add_option("--seed", o.seed, "base seed")->check(CLI::NonNegativeNumber);
    sub->add_option("--seeds", o.seeds, "number of seeds")->check(CLI::PositiveNumber);
    sub->add_option("--set", o.overrides, "override, key=value (repeatable)");
    sub->add_flag("--verify", o.verify, "run inline oracle checks");
  };
  std::string chosen;
  for (const char* name : {"fig1", "depth", "scaling", "frozen", "mnist", "ntk", "verify"}) {
    CLI::App* sub = app.add_subcommand(name);
    add_common(sub);
    sub->callback([&chosen, name] { chosen = name; });
  }
  CLI11_PARSE(app, argc, argv);

  try {
    if (chosen == "verify") return run_verify(o);
    if (chosen == "mnist") return run_mnist(o);
    return run_synthetic(chosen, o);
  } catch (const fh::verification_error& e) {
    std::cerr << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
