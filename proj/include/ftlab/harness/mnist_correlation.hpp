#pragma once

// Correlation between observed transfer error on MNIST digit-pair tasks and
// risk predictors evaluated on the teachers.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "ftlab/error.hpp"
#include "ftlab/harness/config.hpp"
#include "ftlab/harness/experiments.hpp"
#include "ftlab/harness/result_table.hpp"
#include "ftlab/harness/stats.hpp"
#include "ftlab/linalg.hpp"
#include "ftlab/linear_ft.hpp"
#include "ftlab/mnist.hpp"
#include "ftlab/random.hpp"

namespace ftlab::harness {

struct MnistData {
  MnistRaw train;
  MnistRaw test;
};

inline constexpr const char* kMnistFiles[4] = {"train-images-idx3-ubyte", "train-labels-idx1-ubyte",
                                               "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"};

inline std::optional<std::filesystem::path> mnist_dir_from_env() {
  const char* dir = std::getenv("FINETUNE_LAB_DATA");
  if (dir == nullptr || *dir == '\0') return std::nullopt;
  return std::filesystem::path(dir);
}

inline bool mnist_files_present(const std::filesystem::path& dir) {
  for (const char* f : kMnistFiles) {
    if (!std::filesystem::exists(dir / f)) return false;
  }
  return true;
}

inline MnistData load_mnist_dir(const std::filesystem::path& dir) {
  MnistData data;
  data.train = load_mnist_idx((dir / kMnistFiles[0]).string(), (dir / kMnistFiles[1]).string());
  data.test = load_mnist_idx((dir / kMnistFiles[2]).string(), (dir / kMnistFiles[3]).string());
  return data;
}

// What a risk predictor gets to see about one source -> target pair.
struct BoundContext {
  const Vector& theta_s;
  const Vector& theta_t;
  const EigenDecomp& target_cov;  // second-moment matrix of the target train split
  Eigen::Index n;
};

using BoundPlugin = std::function<double(const BoundContext&)>;

struct NamedBound {
  std::string name;
  BoundPlugin fn;
};

inline std::vector<std::pair<int, int>> parse_digit_groups(const std::string& s) {
  std::vector<std::pair<int, int>> out;
  std::istringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    const auto dash = item.find('-');
    if (dash == std::string::npos) throw parse_error("digit group '" + item + "' is not a-b");
    try {
      out.emplace_back(std::stoi(item.substr(0, dash)), std::stoi(item.substr(dash + 1)));
    } catch (const std::exception&) {
      throw parse_error("digit group '" + item + "' is not a-b");
    }
  }
  if (out.size() < 2) throw invalid_argument("need at least two digit groups");
  return out;
}

inline ResultTable run_mnist_correlation(Config& cfg, const MnistData& data,
                                         const std::vector<NamedBound>& plugins = {}) {
  const auto groups = parse_digit_groups(cfg.get_string("groups", "0-1,2-3,4-5,6-7,8-9"));
  const auto grid = cfg.get_ints("n_grid", {10, 15, 20, 25, 30});
  const auto resamples = cfg.get_int("resamples", 25);
  const auto repetitions = cfg.get_int("repetitions", 10);
  const auto base = cfg.get_int("seed", 0);
  const auto k = cfg.get_int("k", 2);
  const double c = cfg.get_double("c", 1.0);
  const double delta = cfg.get_double("delta", 1.0);
  MnistTaskOptions topt;
  topt.center = cfg.get_bool("center", false);
  topt.max_train = static_cast<std::size_t>(cfg.get_int("max_train", 0));
  if (resamples < 1 || repetitions < 1) throw invalid_argument("mnist: resamples and repetitions must be >= 1");

  std::vector<NamedBound> bounds = {
      {"distance_sq", [](const BoundContext& b) { return (b.theta_t - b.theta_s).squaredNorm(); }},
      {"ours_m" + std::to_string(k),
       [k, c, delta](const BoundContext& b) {
         return risk_upper_bound_concentration(b.target_cov, b.n, delta, c, b.theta_s, b.theta_t, k)
             .concentration_bound;
       }},
  };
  bounds.insert(bounds.end(), plugins.begin(), plugins.end());

  std::vector<MnistTask> tasks;
  std::vector<EigenDecomp> covs;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    tasks.push_back(build_mnist_task(data.train, data.test, groups[g],
                                     derive_seed(static_cast<std::uint64_t>(base), 500 + g), topt));
    covs.push_back(eig_covariance(empirical_covariance(tasks.back().x_train)));
  }
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    for (std::size_t j = 0; j < tasks.size(); ++j) {
      if (i != j) pairs.emplace_back(i, j);
    }
  }
  auto pair_name = [&](const std::pair<std::size_t, std::size_t>& p) {
    const auto& a = tasks[p.first].digit_pair;
    const auto& b = tasks[p.second].digit_pair;
    std::ostringstream os;
    os << a.first << a.second << "->" << b.first << b.second;
    return os.str();
  };

  ResultTable t;
  t.experiment = "mnist";
  for (long long r = 0; r < repetitions; ++r) {
    const auto seed = static_cast<std::uint64_t>(base + r);
    for (auto n : grid) {
      std::vector<double> errors;
      for (std::size_t pi = 0; pi < pairs.size(); ++pi) {
        const MnistTask& src = tasks[pairs[pi].first];
        const MnistTask& tgt = tasks[pairs[pi].second];
        Rng rng = make_rng(derive_seed(seed, 1000 * static_cast<std::uint64_t>(n) + pi));
        std::vector<std::size_t> idx(static_cast<std::size_t>(tgt.x_train.rows()));
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        if (static_cast<std::size_t>(n) > idx.size()) throw invalid_argument("mnist: n exceeds the target train split");
        double err = 0.0;
        for (long long q = 0; q < resamples; ++q) {
          // partial Fisher-Yates: first n entries are a uniform subsample
          Matrix x(n, tgt.x_train.cols());
          for (long long i = 0; i < n; ++i) {
            std::uniform_int_distribution<std::size_t> pick(static_cast<std::size_t>(i), idx.size() - 1);
            std::swap(idx[static_cast<std::size_t>(i)], idx[pick(rng)]);
            x.row(i) = tgt.x_train.row(static_cast<Eigen::Index>(idx[static_cast<std::size_t>(i)]));
          }
          const Vector gamma = closed_form_linear(projectors_from_rows(x), src.teacher, tgt.teacher);
          err += zero_one_error(tgt.x_test, tgt.y_test, gamma);
        }
        err /= static_cast<double>(resamples);
        errors.push_back(err);
        t.add(seed, n, 0, "pair=" + pair_name(pairs[pi]), "test_error", err);
      }
      for (const auto& b : bounds) {
        std::vector<double> pred;
        for (const auto& p : pairs) {
          pred.push_back(b.fn(BoundContext{tasks[p.first].teacher, tasks[p.second].teacher, covs[p.second],
                                           static_cast<Eigen::Index>(n)}));
        }
        t.add(seed, n, 0, b.name, "r_squared", r_squared(pred, errors));
      }
    }
  }
  finish(t, cfg);
  return t;
}

}  // namespace ftlab::harness
