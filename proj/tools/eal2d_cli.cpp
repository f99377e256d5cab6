#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "eal2d/checkpoint.hpp"
#include "eal2d/config.hpp"
#include "eal2d/error.hpp"
#include "eal2d/experiment.hpp"

namespace fs = std::filesystem;
using namespace eal2d;

namespace {

enum Exit { kOk = 0, kInvalid = 1, kCheckFailed = 2, kAllDiverged = 3 };

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "JSON config file (defaults when omitted)")->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seed, "run this single seed instead of the configured list");
  cmd->add_option("--out", c.out, "output directory")->capture_default_str();
}

harness::ExperimentConfig load(const Common& c) {
  harness::ExperimentConfig cfg;
  if (!c.config.empty()) {
    auto parsed = harness::parse_config(c.config);
    for (const auto& w : parsed.warnings) std::cerr << "warning: " << w << '\n';
    cfg = std::move(parsed.config);
  }
  if (c.seed) cfg.seeds = {*c.seed};
  return cfg;
}

std::ofstream create(const fs::path& path) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInput("cannot write " + path.string());
  return out;
}

int status_of(const std::vector<harness::RunOutcome>& runs) {
  if (!runs.empty() && std::all_of(runs.begin(), runs.end(), [](const auto& r) { return r.diverged; }))
    return kAllDiverged;
  for (const auto& r : runs) {
    for (const auto& c : r.cohorts) {
      if (!c.bayes_ceiling_ok) {
        std::cerr << "check failed: " << defer::to_string(r.method) << " seed " << r.seed << ' '
                  << c.cohort << " AURSAC " << c.aursac << " exceeds the Bayes reference "
                  << c.oracle_aursac << '\n';
        return kCheckFailed;
      }
    }
  }
  return kOk;
}

void report_runs(const std::vector<harness::RunOutcome>& runs) {
  for (const auto& r : runs) {
    std::cout << defer::to_string(r.method) << " p=" << r.overlap << " e=" << r.expertise
              << " seed=" << r.seed;
    if (r.diverged) {
      std::cout << " diverged: " << r.message << '\n';
      continue;
    }
    std::cout << " classifier=" << r.classifier_accuracy;
    for (const auto& c : r.cohorts)
      std::cout << ' ' << c.cohort << "[AURSAC=" << c.aursac << " AURDAC=" << c.aurdac << ']';
    std::cout << '\n';
  }
}

int cmd_generate(const Common& c) {
  const auto cfg = load(c);
  const fs::path dir(c.out);
  for (auto seed : cfg.seeds) {
    const auto world = harness::build_world(cfg, cfg.overlap_grid.front(), cfg.expertise_grid.front(), seed);
    const fs::path sub = dir / ("seed" + std::to_string(seed));
    const std::pair<const char*, const sim::Dataset*> parts[] = {
        {"train.csv", &world.task.train},
        {"validation.csv", &world.task.validation},
        {"test.csv", &world.task.test},
        {"context_pool.csv", &world.task.context_pool}};
    for (const auto& [name, data] : parts) {
      auto out = create(sub / name);
      sim::write_csv_dataset(out, *data);
    }
    auto experts = create(sub / "experts.csv");
    experts << "expert_id,cohort,overlap_probability,expertise_classes\n";
    for (const auto& e : world.population) {
      experts << e.expert_id << ',' << (e.in_distribution ? "id" : "ood") << ','
              << e.overlap_probability << ',';
      for (std::size_t i = 0; i < e.expertise_classes.size(); ++i)
        experts << (i ? ";" : "") << e.expertise_classes[i];
      experts << '\n';
    }
    auto contexts = create(sub / "contexts.csv");
    contexts << "expert_id,true_label,expert_prediction\n";
    for (const auto& e : world.training_experts) {
      for (const auto& ex : e.context)
        contexts << e.expert_id << ',' << ex.true_label << ',' << ex.expert_prediction << '\n';
    }
    std::cout << "wrote " << sub.string() << '\n';
  }
  return kOk;
}

int cmd_train(const Common& c, const std::vector<std::string>& methods) {
  auto cfg = load(c);
  if (!methods.empty()) {
    cfg.methods.clear();
    for (const auto& m : methods) cfg.methods.push_back(defer::parse_method(m));
  }
  const fs::path dir(c.out);
  fs::create_directories(dir);
  int diverged = 0, total = 0;
  for (auto seed : cfg.seeds) {
    const auto world = harness::build_world(cfg, cfg.overlap_grid.front(), cfg.expertise_grid.front(), seed);
    for (auto method : cfg.methods) {
      ++total;
      const std::string stem = defer::to_string(method) + "_seed" + std::to_string(seed);
      try {
        const auto result = harness::train_method(cfg, world, method);
        defer::save_checkpoint((dir / (stem + ".ckpt")).string(),
                               {result.model, harness::training_config(cfg, seed), cfg.context_subsample});
        auto log = create(dir / (stem + "_training.csv"));
        log << "epoch,train_loss,validation_loss\n";
        for (std::size_t i = 0; i < result.train_loss.size(); ++i) {
          log << i << ',' << result.train_loss[i] << ',';
          if (i < result.validation_loss.size()) log << result.validation_loss[i];
          log << '\n';
        }
        std::cout << stem << ": " << result.epochs_run << " epochs, best " << result.best_epoch
                  << ", classifier accuracy "
                  << eval::classifier_accuracy(result.model, world.task.test) << '\n';
      } catch (const TrainingDivergence& e) {
        ++diverged;
        std::cerr << stem << " diverged: " << e.what() << '\n';
      }
    }
  }
  return diverged == total ? kAllDiverged : kOk;
}

int cmd_evaluate(const Common& c, const std::string& checkpoint) {
  const auto cfg = load(c);
  const auto ckpt = defer::load_checkpoint(checkpoint);
  const std::string method = defer::to_string(ckpt.model.method);
  const fs::path dir(c.out);
  std::vector<harness::RunOutcome> runs;
  for (auto seed : cfg.seeds) {
    const auto world = harness::build_world(cfg, cfg.overlap_grid.front(), cfg.expertise_grid.front(), seed);
    if (ckpt.model.num_classes != world.task.test.num_classes ||
        ckpt.model.classifier.input_dim() != world.task.test.feature_dim)
      throw InvalidInput("checkpoint shape does not match the configured task");
    harness::RunOutcome run;
    run.method = ckpt.model.method;
    run.overlap = world.overlap;
    run.expertise = world.expertise;
    run.seed = seed;
    run.classifier_accuracy = eval::classifier_accuracy(ckpt.model, world.task.test);
    run.cohorts = harness::evaluate_world(cfg, world, ckpt.model);
    std::vector<eval::MetricRow> rows;
    for (const auto& co : run.cohorts) {
      auto out = create(dir / "curves" / (method + "_" + co.cohort + "_seed" + std::to_string(seed) + ".csv"));
      eval::write_curves_csv(out, co.curves);
      rows.insert(rows.end(), co.rows.begin(), co.rows.end());
    }
    auto out = create(dir / "metrics" / (method + "_seed" + std::to_string(seed) + ".csv"));
    eval::write_metrics_csv(out, rows);
    runs.push_back(std::move(run));
  }
  report_runs(runs);
  return status_of(runs);
}

int cmd_run(const Common& c) {
  const auto cfg = load(c);
  const auto result = harness::run_experiment(cfg, c.out);
  report_runs(result.runs);
  return status_of(result.runs);
}

int cmd_sweep(const Common& c, const std::string& kind, const std::vector<double>& grid) {
  const auto cfg = load(c);
  std::optional<std::vector<double>> g;
  if (!grid.empty()) g = grid;
  const auto result = harness::run_sweep(cfg, harness::parse_sweep_kind(kind), g, c.out);
  for (const auto& r : result.rows) {
    std::cout << kind << ' ' << r.value << " seed=" << r.seed << ' ' << r.cohort
              << " gap=" << r.gap() << '\n';
  }
  return status_of(result.experiment.runs);
}

int cmd_priors(const Common& c) {
  const auto cfg = load(c);
  const auto result = harness::run_priors_study(cfg, c.out);
  int diverged = 0;
  bool ceiling_ok = true;
  for (const auto& s : result.seeds) {
    if (s.diverged) {
      ++diverged;
      std::cerr << "seed " << s.seed << " diverged: " << s.message << '\n';
      continue;
    }
    for (const auto& a : s.arms) {
      std::cout << "seed=" << s.seed << ' ' << a.name << " AURSAC=" << a.aursac
                << " AURDAC=" << a.aurdac << '\n';
      if (a.aursac > a.oracle_aursac + 0.02) ceiling_ok = false;
    }
  }
  if (diverged == static_cast<int>(result.seeds.size())) return kAllDiverged;
  return ceiling_ok ? kOk : kCheckFailed;
}

int cmd_theory(const std::vector<std::uint64_t>& seeds, double n_scale, int trials, int threads,
               const std::string& out) {
  harness::TheoryOptions opt;
  opt.seeds = seeds;
  opt.n_scale = n_scale;
  opt.trials = trials;
  opt.threads = threads;
  const auto report = harness::run_theory_checks(opt);
  for (const auto& n : report.notes) std::cout << "note: " << n << '\n';
  if (out.empty()) {
    harness::write_theory_csv(std::cout, report);
  } else {
    auto f = create(fs::path(out) / "theory_report.csv");
    harness::write_theory_csv(f, report);
    for (const auto& r : report.rows) {
      if (!r.pass) std::cout << "fail: " << r.check << ' ' << r.params << '\n';
    }
    std::cout << "wrote " << (fs::path(out) / "theory_report.csv").string() << '\n';
  }
  return report.all_pass() ? kOk : kCheckFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Expert-agnostic learning to defer: simulation and evaluation harness"};
  app.set_version_flag("--version", harness::version_string());
  app.require_subcommand(1);

  Common gen, tr, ev, run, sw, pr;
  auto* generate = app.add_subcommand("generate", "write the synthetic task partitions and expert population");
  add_common(generate, gen);

  auto* train = app.add_subcommand("train", "train and checkpoint each configured method");
  add_common(train, tr);
  std::vector<std::string> methods;
  train->add_option("--method", methods, "override the configured methods (ea_l2d, pop_avg)");

  auto* evaluate = app.add_subcommand("evaluate", "score a checkpoint against the ID and OOD cohorts");
  add_common(evaluate, ev);
  std::string checkpoint;
  evaluate->add_option("--checkpoint", checkpoint, "checkpoint written by train")->required()->check(CLI::ExistingFile);

  auto* experiment = app.add_subcommand("run", "train and evaluate every configured run");
  add_common(experiment, run);

  auto* sweep = app.add_subcommand("sweep", "overlap-probability or expertise-count grid");
  add_common(sweep, sw);
  std::string kind = "diversity";
  std::vector<double> grid;
  sweep->add_option("--kind", kind, "diversity or multi-expertise")->capture_default_str();
  sweep->add_option("--grid", grid, "grid values (comma separated)")->delimiter(',');

  auto* priors = app.add_subcommand("priors-study", "zero-context expert under three prior arms");
  add_common(priors, pr);

  auto* theory = app.add_subcommand("theory-check", "Monte Carlo checks of the posterior guarantees");
  std::vector<std::uint64_t> seeds;
  double n_scale = 1.0;
  int trials = 2000, threads = 1;
  std::string theory_out;
  theory->add_option("--seed,--seeds", seeds, "seeds (comma separated)")->delimiter(',');
  theory->add_option("--n-scale", n_scale, "multiply the sample bound (values < 1 undersize it)")->capture_default_str();
  theory->add_option("--trials", trials, "trials per cell")->capture_default_str();
  theory->add_option("--threads", threads, "worker threads")->capture_default_str();
  theory->add_option("--out", theory_out, "directory for theory_report.csv (stdout when omitted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kInvalid;
  }

  try {
    if (*generate) return cmd_generate(gen);
    if (*train) return cmd_train(tr, methods);
    if (*evaluate) return cmd_evaluate(ev, checkpoint);
    if (*experiment) return cmd_run(run);
    if (*sweep) return cmd_sweep(sw, kind, grid);
    if (*priors) return cmd_priors(pr);
    if (*theory) return cmd_theory(seeds, n_scale, trials, threads, theory_out);
  } catch (const InvalidInput& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInvalid;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInvalid;
  } catch (const UnsupportedTask& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInvalid;
  }
  return kOk;
}
