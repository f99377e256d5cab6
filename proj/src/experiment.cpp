#include "eal2d/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "csv.hpp"
#include "eal2d/error.hpp"
#include "eal2d/theory.hpp"

#ifndef EAL2D_VERSION
#define EAL2D_VERSION "0.1.0"
#endif

namespace eal2d::harness {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr double kBayesTolerance = 0.02;

std::ofstream open_out(const fs::path& path) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInput("cannot write " + path.string());
  return out;
}

std::string run_tag(double overlap, int expertise, std::uint64_t seed) {
  return "p" + csv::format_double(overlap) + "_e" + std::to_string(expertise) + "_seed" +
         std::to_string(seed);
}

std::map<int, expert::PriorElicitation> load_priors(const ExperimentConfig& cfg) {
  if (!cfg.prior_file) return {};
  return expert::load_prior_file(*cfg.prior_file, cfg.task.num_classes);
}

std::vector<expert::BetaParams> priors_for(const std::map<int, expert::PriorElicitation>& table,
                                           int expert_id, const ExperimentConfig& cfg) {
  const auto it = table.find(expert_id);
  if (it == table.end())
    return expert::elicit_priors(
        expert::PriorElicitation::uninformative(cfg.task.num_classes, cfg.prior_strength));
  return expert::elicit_priors(it->second);
}

std::vector<int> predict_all(const sim::SimulatedExpertSpec& e, const sim::Dataset& data,
                             int num_classes, sim::Rng& rng) {
  std::vector<int> out;
  out.reserve(data.size());
  for (const auto& ex : data.examples) out.push_back(sim::expert_predict(e, ex.label, num_classes, rng));
  return out;
}

std::vector<std::vector<int>> transpose(const std::vector<std::vector<int>>& by_expert,
                                        std::size_t examples) {
  std::vector<std::vector<int>> out(examples);
  for (const auto& preds : by_expert) {
    for (std::size_t i = 0; i < examples; ++i) out[i].push_back(preds[i]);
  }
  return out;
}

double oracle_aursac(const World& world, const std::vector<eval::CohortMember>& cohort,
                     eval::CurvePair* curves) {
  if (!world.task.model) return std::nan("");
  std::vector<std::vector<double>> acc;
  std::vector<std::vector<int>> preds;
  for (const auto& m : cohort) {
    const auto& spec = world.population.at(static_cast<std::size_t>(m.expert_id));
    acc.push_back(spec.true_accuracies(world.task.test.num_classes));
    preds.push_back(m.test_predictions);
  }
  auto ref = theory::bayes_optimal_reference(world.task, acc, preds);
  if (curves) *curves = ref.curves;
  return eval::area_under(ref.curves.system, 0.0, 1.0);
}

void write_curves(const fs::path& path, const eval::CurvePair& curves) {
  auto out = open_out(path);
  eval::write_curves_csv(out, curves);
}

json run_json(const RunOutcome& r) {
  json j;
  j["method"] = defer::to_string(r.method);
  j["overlap_probability"] = r.overlap;
  j["expertise_per_expert"] = r.expertise;
  j["seed"] = r.seed;
  j["status"] = r.diverged ? "diverged" : "ok";
  if (r.diverged) {
    j["message"] = r.message;
    return j;
  }
  j["classifier_accuracy"] = r.classifier_accuracy;
  j["epochs_run"] = r.epochs_run;
  for (const auto& c : r.cohorts) {
    j["cohorts"][c.cohort] = {{"aursac", c.aursac},
                              {"aurdac", c.aurdac},
                              {"oracle_aursac", c.oracle_aursac},
                              {"bayes_ceiling_ok", c.bayes_ceiling_ok}};
  }
  return j;
}

void write_manifest(const fs::path& dir, const ExperimentConfig& cfg, const std::string& kind,
                    const json& extra, const std::vector<RunOutcome>& runs) {
  json m;
  m["version"] = version_string();
  m["kind"] = kind;
  m["config"] = json::parse(config_to_json(cfg));
  m["seeds"] = cfg.seeds;
  m["runs"] = json::array();
  for (const auto& r : runs) m["runs"].push_back(run_json(r));
  if (!extra.is_null()) m["details"] = extra;
  auto out = open_out(dir / "manifest.json");
  out << m.dump(2) << '\n';
}

void write_summary(const fs::path& dir, const std::vector<RunOutcome>& runs) {
  auto out = open_out(dir / "summary.csv");
  out << "method,overlap_probability,expertise_per_expert,seed,cohort,status,classifier_accuracy,"
         "aursac,aurdac,oracle_aursac,bayes_ceiling_ok\n";
  for (const auto& r : runs) {
    const std::string head = defer::to_string(r.method) + ',' + csv::format_double(r.overlap) +
                             ',' + std::to_string(r.expertise) + ',' + std::to_string(r.seed);
    if (r.diverged) {
      out << head << ",,diverged,,,,,\n";
      continue;
    }
    for (const auto& c : r.cohorts) {
      out << head << ',' << c.cohort << ",ok," << csv::format_double(r.classifier_accuracy) << ','
          << csv::format_double(c.aursac) << ',' << csv::format_double(c.aurdac) << ','
          << csv::format_double(c.oracle_aursac) << ',' << (c.bayes_ceiling_ok ? "true" : "false")
          << '\n';
    }
  }
}

}  // namespace

std::string version_string() { return EAL2D_VERSION; }

World build_world(const ExperimentConfig& cfg, double overlap, int expertise, std::uint64_t seed) {
  World w;
  w.overlap = overlap;
  w.expertise = expertise;
  w.seed = seed;
  sim::SyntheticTaskSpec spec = cfg.task;
  spec.seed = seed;
  w.task = sim::generate_gaussian_task(spec);
  const int k = spec.num_classes;
  w.population = sim::make_population(k, cfg.id_experts, cfg.ood_experts, overlap, expertise,
                                      cfg.context_size, seed);
  const auto priors = load_priors(cfg);

  std::vector<std::vector<int>> train_by_expert, val_by_expert;
  for (const auto& e : w.population) {
    const auto id = static_cast<std::uint64_t>(e.expert_id);
    sim::Rng ctx_rng(sim::derive_seed(seed, streams::kContextBase + id));
    auto context = sim::to_context_examples(sim::draw_context_set(e, w.task.context_pool, ctx_rng));
    auto beta = priors_for(priors, e.expert_id, cfg);

    sim::Rng test_rng(sim::derive_seed(seed, streams::kTestPredictionBase + id));
    eval::CohortMember member{e.expert_id, expert::build_representation(context, beta, k),
                              predict_all(e, w.task.test, k, test_rng)};
    if (e.in_distribution) {
      sim::Rng query_rng(sim::derive_seed(seed, streams::kQueryPredictionBase + id));
      train_by_expert.push_back(predict_all(e, w.task.train, k, query_rng));
      val_by_expert.push_back(predict_all(e, w.task.validation, k, query_rng));
      w.training_experts.push_back({e.expert_id, std::move(context), std::move(beta)});
      w.id_cohort.push_back(std::move(member));
    } else {
      w.ood_cohort.push_back(std::move(member));
    }
  }
  w.train_predictions = transpose(train_by_expert, w.task.train.size());
  w.validation_predictions = transpose(val_by_expert, w.task.validation.size());
  return w;
}

nn::TrainConfig training_config(const ExperimentConfig& cfg, std::uint64_t seed) {
  nn::TrainConfig t = cfg.train;
  t.seed = sim::derive_seed(seed, streams::kTraining);
  return t;
}

defer::TrainResult train_method(const ExperimentConfig& cfg, const World& world,
                                defer::Method method) {
  auto model = defer::make_model(method, world.task.train.feature_dim, world.task.train.num_classes,
                                 cfg.architecture,
                                 sim::derive_seed(world.seed, streams::kModelInit));
  const auto tc = training_config(cfg, world.seed);
  if (method == defer::Method::EaL2d)
    return defer::train(std::move(model), world.task.train, world.task.validation,
                        world.training_experts, tc, cfg.context_subsample);
  return defer::train_pop_avg(std::move(model), world.task.train, world.task.validation,
                              world.train_predictions, world.validation_predictions, tc);
}

std::vector<CohortOutcome> evaluate_world(const ExperimentConfig& cfg, const World& world,
                                          const defer::L2dModel& model) {
  std::vector<CohortOutcome> out;
  const std::uint64_t choice_seed = sim::derive_seed(world.seed, streams::kBaselineChoice);
  for (const auto* cohort : {&world.id_cohort, &world.ood_cohort}) {
    if (cohort->empty()) continue;
    CohortOutcome c;
    c.cohort = cohort == &world.id_cohort ? "id" : "ood";
    c.curves = eval::build_curves(eval::score_cases(model, world.task.test, *cohort, choice_seed));
    c.rows = eval::metric_rows(c.curves, cfg.ranges, c.cohort, world.seed);
    c.aursac = eval::area_under(c.curves.system, 0.0, 1.0);
    c.aurdac = eval::area_under(c.curves.expert, 0.0, 1.0);
    c.oracle_aursac = oracle_aursac(world, *cohort, nullptr);
    c.bayes_ceiling_ok = std::isnan(c.oracle_aursac) || c.aursac <= c.oracle_aursac + kBayesTolerance;
    out.push_back(std::move(c));
  }
  return out;
}

const CohortOutcome& RunOutcome::cohort(const std::string& name) const {
  for (const auto& c : cohorts) {
    if (c.cohort == name) return c;
  }
  throw InvalidInput("run has no cohort \"" + name + "\"");
}

bool ExperimentResult::all_diverged() const {
  return !runs.empty() &&
         std::all_of(runs.begin(), runs.end(), [](const RunOutcome& r) { return r.diverged; });
}

const RunOutcome& ExperimentResult::find(defer::Method method, double overlap, int expertise,
                                         std::uint64_t seed) const {
  for (const auto& r : runs) {
    if (r.method == method && r.overlap == overlap && r.expertise == expertise && r.seed == seed)
      return r;
  }
  throw InvalidInput("no such run");
}

namespace {

ExperimentResult run_grid(const ExperimentConfig& cfg, const std::optional<fs::path>& dir) {
  ExperimentResult result;
  for (double p : cfg.overlap_grid) {
    for (int e : cfg.expertise_grid) {
      for (std::uint64_t seed : cfg.seeds) {
        const World world = build_world(cfg, p, e, seed);
        const std::string tag = run_tag(p, e, seed);
        if (dir) {
          for (const auto* cohort : {&world.id_cohort, &world.ood_cohort}) {
            if (cohort->empty() || !world.task.model) continue;
            eval::CurvePair oracle;
            oracle_aursac(world, *cohort, &oracle);
            const std::string name = cohort == &world.id_cohort ? "id" : "ood";
            write_curves(*dir / "curves" / ("bayes_oracle_" + name + "_" + tag + ".csv"), oracle);
          }
        }
        for (auto method : cfg.methods) {
          RunOutcome run;
          run.method = method;
          run.overlap = p;
          run.expertise = e;
          run.seed = seed;
          try {
            const auto trained = train_method(cfg, world, method);
            run.epochs_run = trained.epochs_run;
            run.classifier_accuracy = eval::classifier_accuracy(trained.model, world.task.test);
            run.cohorts = evaluate_world(cfg, world, trained.model);
          } catch (const TrainingDivergence& err) {
            run.diverged = true;
            run.message = err.what();
          }
          if (dir && !run.diverged) {
            const std::string m = defer::to_string(method);
            std::vector<eval::MetricRow> rows;
            for (const auto& c : run.cohorts) {
              write_curves(*dir / "curves" / (m + "_" + c.cohort + "_" + tag + ".csv"), c.curves);
              rows.insert(rows.end(), c.rows.begin(), c.rows.end());
            }
            auto out = open_out(*dir / "metrics" / (m + "_" + tag + ".csv"));
            eval::write_metrics_csv(out, rows);
          }
          result.runs.push_back(std::move(run));
        }
      }
    }
  }
  return result;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg,
                                const std::optional<std::string>& out_dir) {
  std::optional<fs::path> dir;
  if (out_dir) dir = fs::path(*out_dir);
  auto result = run_grid(cfg, dir);
  if (dir) {
    write_summary(*dir, result.runs);
    write_manifest(*dir, cfg, "experiment", nullptr, result.runs);
  }
  return result;
}

SweepKind parse_sweep_kind(const std::string& name) {
  if (name == "diversity") return SweepKind::Diversity;
  if (name == "multi-expertise") return SweepKind::MultiExpertise;
  throw InvalidInput("unknown sweep kind \"" + name + "\" (expected diversity or multi-expertise)");
}

std::string to_string(SweepKind kind) {
  return kind == SweepKind::Diversity ? "diversity" : "multi-expertise";
}

SweepResult run_sweep(const ExperimentConfig& base, SweepKind kind,
                      const std::optional<std::vector<double>>& grid,
                      const std::optional<std::string>& out_dir) {
  ExperimentConfig cfg = base;
  cfg.methods = {defer::Method::EaL2d, defer::Method::PopAvg};
  std::vector<double> values;
  if (kind == SweepKind::Diversity) {
    values = grid.value_or(std::vector<double>{0.2, 0.5, 0.8});
    for (double p : values) {
      if (!(p >= 0.0 && p <= 1.0)) throw InvalidInput("overlap_probability must lie in [0,1]");
    }
    cfg.overlap_grid = values;
  } else {
    values = grid.value_or(std::vector<double>{1, 2, 3});
    cfg.id_experts = 1;
    cfg.ood_experts = 1;
    cfg.expertise_grid.clear();
    for (double v : values) {
      if (v != std::floor(v) || v < 1 || v > cfg.task.num_classes)
        throw InvalidInput("expertise_per_expert must be an integer in [1, num_classes]");
      cfg.expertise_grid.push_back(static_cast<int>(v));
    }
  }

  std::optional<fs::path> dir;
  if (out_dir) dir = fs::path(*out_dir);
  SweepResult out;
  out.experiment = run_grid(cfg, dir);

  for (const auto& ea : out.experiment.runs) {
    if (ea.method != defer::Method::EaL2d || ea.diverged) continue;
    const auto& pa = out.experiment.find(defer::Method::PopAvg, ea.overlap, ea.expertise, ea.seed);
    if (pa.diverged) continue;
    for (const auto& c : ea.cohorts) {
      const double value = kind == SweepKind::Diversity ? ea.overlap : ea.expertise;
      out.rows.push_back({value, ea.seed, c.cohort, c.aurdac, pa.cohort(c.cohort).aurdac});
    }
  }

  if (dir) {
    auto csv_out = open_out(*dir / "sweep.csv");
    csv_out << (kind == SweepKind::Diversity ? "overlap_probability" : "expertise_per_expert")
            << ",seed,cohort,ea_l2d_aurdac,pop_avg_aurdac,gap\n";
    for (const auto& r : out.rows) {
      csv_out << csv::format_double(r.value) << ',' << r.seed << ',' << r.cohort << ','
              << csv::format_double(r.ea_l2d_aurdac) << ',' << csv::format_double(r.pop_avg_aurdac)
              << ',' << csv::format_double(r.gap()) << '\n';
    }
    write_summary(*dir, out.experiment.runs);
    write_manifest(*dir, cfg, "sweep-" + to_string(kind), {{"grid", values}}, out.experiment.runs);
  }
  return out;
}

const PriorsArm& PriorsSeedResult::arm(const std::string& name) const {
  for (const auto& a : arms) {
    if (a.name == name) return a;
  }
  throw InvalidInput("no prior arm \"" + name + "\"");
}

namespace {

struct ArmSpec {
  std::string name;
  expert::PriorElicitation elicitation;
};

std::vector<ArmSpec> prior_arms(const ExperimentConfig& cfg) {
  const int k = cfg.task.num_classes;
  const auto& ps = cfg.priors;
  std::vector<ArmSpec> arms;
  if (!ps.prior_files.empty()) {
    for (const auto& path : ps.prior_files) {
      const auto table = expert::load_prior_file(path, k);
      const auto it = table.find(0);
      if (it == table.end()) throw InvalidInput("prior file " + path + " has no entry for expert 0");
      arms.push_back({fs::path(path).stem().string(), it->second});
    }
    return arms;
  }
  auto focused = [&](int cls) {
    auto el = expert::PriorElicitation::uninformative(k, ps.strength);
    el.accuracy[static_cast<std::size_t>(cls)] = ps.elicited_accuracy;
    el.confidence[static_cast<std::size_t>(cls)] = ps.elicited_confidence;
    return el;
  };
  arms.push_back({"accurate", focused(ps.target_class)});
  arms.push_back({"uninformative", expert::PriorElicitation::uninformative(k, ps.strength)});
  arms.push_back({"misdirected", focused(misdirected_class(cfg))});
  return arms;
}

}  // namespace

PriorsStudyResult run_priors_study(const ExperimentConfig& cfg,
                                   const std::optional<std::string>& out_dir) {
  const auto arms = prior_arms(cfg);
  const int k = cfg.task.num_classes;
  const double overlap = cfg.overlap_grid.front();
  const int expertise = cfg.expertise_grid.front();

  std::optional<fs::path> dir;
  if (out_dir) dir = fs::path(*out_dir);

  PriorsStudyResult result;
  std::vector<RunOutcome> runs;
  json details = json::array();
  for (std::uint64_t seed : cfg.seeds) {
    PriorsSeedResult sr;
    sr.seed = seed;
    const World world = build_world(cfg, overlap, expertise, seed);

    sim::SimulatedExpertSpec target;
    target.expert_id = 0;
    target.expertise_classes = {cfg.priors.target_class};
    target.overlap_probability = cfg.priors.target_overlap;
    target.context_size = 0;
    target.in_distribution = false;
    sim::Rng rng(sim::derive_seed(seed, streams::kPriorsTarget));
    const auto target_predictions = predict_all(target, world.task.test, k, rng);

    RunOutcome run;
    run.method = defer::Method::EaL2d;
    run.overlap = overlap;
    run.expertise = expertise;
    run.seed = seed;
    defer::TrainResult trained;
    try {
      trained = train_method(cfg, world, defer::Method::EaL2d);
      run.epochs_run = trained.epochs_run;
      run.classifier_accuracy = eval::classifier_accuracy(trained.model, world.task.test);
    } catch (const TrainingDivergence& err) {
      run.diverged = sr.diverged = true;
      run.message = sr.message = err.what();
    }
    runs.push_back(run);
    if (sr.diverged) {
      result.seeds.push_back(std::move(sr));
      continue;
    }

    double oracle = std::nan("");
    if (world.task.model) {
      const std::vector<std::vector<double>> acc{target.true_accuracies(k)};
      const std::vector<std::vector<int>> preds{target_predictions};
      const auto ref = theory::bayes_optimal_reference(world.task, acc, preds);
      oracle = eval::area_under(ref.curves.system, 0.0, 1.0);
      if (dir) write_curves(*dir / "curves" / ("bayes_oracle_target_seed" + std::to_string(seed) + ".csv"), ref.curves);
    }

    std::vector<eval::MetricRow> rows;
    for (const auto& spec : arms) {
      const std::vector<expert::ContextExample> empty;
      const std::vector<eval::CohortMember> cohort{
          {0, expert::build_representation(empty, spec.elicitation, k), target_predictions}};
      PriorsArm arm;
      arm.name = spec.name;
      arm.curves = eval::build_curves(eval::score_cases(trained.model, world.task.test, cohort, seed));
      arm.aursac = eval::area_under(arm.curves.system, 0.0, 1.0);
      arm.aurdac = eval::area_under(arm.curves.expert, 0.0, 1.0);
      arm.oracle_aursac = oracle;
      auto arm_rows = eval::metric_rows(arm.curves, cfg.ranges, spec.name, seed);
      rows.insert(rows.end(), arm_rows.begin(), arm_rows.end());
      if (dir)
        write_curves(*dir / "curves" / ("priors_" + spec.name + "_seed" + std::to_string(seed) + ".csv"),
                     arm.curves);
      details.push_back({{"seed", seed},
                         {"arm", spec.name},
                         {"aursac", arm.aursac},
                         {"aurdac", arm.aurdac},
                         {"oracle_aursac", std::isnan(oracle) ? json(nullptr) : json(oracle)}});
      sr.arms.push_back(std::move(arm));
    }
    if (dir) {
      auto out = open_out(*dir / "metrics" / ("priors_seed" + std::to_string(seed) + ".csv"));
      eval::write_metrics_csv(out, rows);
    }
    result.seeds.push_back(std::move(sr));
  }
  if (dir) write_manifest(*dir, cfg, "priors-study", details, runs);
  return result;
}

bool TheoryReport::all_pass() const {
  return std::all_of(rows.begin(), rows.end(), [](const TheoryRow& r) { return r.pass; });
}

TheoryReport run_theory_checks(const TheoryOptions& options) {
  if (!(options.n_scale > 0.0)) throw InvalidInput("n_scale must be > 0");
  if (options.trials < 1) throw InvalidInput("trials must be >= 1");
  TheoryReport report;
  std::vector<std::uint64_t> seeds = options.seeds;
  if (seeds.empty()) {
    seeds.push_back(1);
    report.notes.push_back("no seeds given; using default seed 1");
  }

  for (std::uint64_t seed : seeds) {
    for (int k : {2, 10}) {
      for (double gap : {0.1, 0.3}) {
        for (double delta : {0.05, 0.1}) {
          theory::TrialConfig tc;
          tc.theta.assign(static_cast<std::size_t>(k), 0.5 - gap / 2);
          tc.theta[0] = 0.5 + gap / 2;
          const auto bound = expert::sample_complexity_bound(k, delta, gap);
          tc.samples_per_class = std::max<std::int64_t>(
              1, static_cast<std::int64_t>(std::ceil(static_cast<double>(bound) * options.n_scale)));
          tc.trials = options.trials;
          tc.delta = delta;
          tc.seed = sim::derive_seed(seed, static_cast<std::uint64_t>(k * 1000 + gap * 100 + delta * 1000));
          const double rate = theory::prop2_misidentification_rate(tc, options.threads);
          json params{{"K", k}, {"gap", gap}, {"delta", delta}, {"n", tc.samples_per_class},
                      {"trials", tc.trials}, {"seed", seed}};
          report.rows.push_back({"prop2_misidentification", params.dump(), rate, delta, rate <= delta});
        }
      }
    }

    // Posterior mean convergence: the median error must shrink along the
    // schedule and end small.
    {
      const std::vector<std::int64_t> schedule{10, 100, 1000, 10000, 100000};
      constexpr int kTrials = 1000;
      constexpr double kTheta = 0.7;
      std::vector<std::vector<double>> errors(schedule.size());
      sim::Rng rng(sim::derive_seed(seed, 77));
      for (int t = 0; t < kTrials; ++t) {
        const auto e = theory::prop1_convergence_trial(kTheta, schedule, rng);
        for (std::size_t i = 0; i < e.size(); ++i) errors[i].push_back(e[i]);
      }
      std::vector<double> medians;
      for (auto& e : errors) {
        std::nth_element(e.begin(), e.begin() + static_cast<std::ptrdiff_t>(e.size() / 2), e.end());
        medians.push_back(e[e.size() / 2]);
      }
      double worst_ratio = 0.0;
      for (std::size_t i = 1; i < medians.size(); ++i)
        worst_ratio = std::max(worst_ratio, medians[i] / medians[i - 1]);
      json params{{"theta", kTheta}, {"schedule", schedule}, {"trials", kTrials}, {"seed", seed}};
      report.rows.push_back({"prop1_median_ratio", params.dump(), worst_ratio, 1.0, worst_ratio < 1.0});
      report.rows.push_back(
          {"prop1_final_median_error", params.dump(), medians.back(), 0.005, medians.back() < 0.005});
    }

    // Bayes reference on a small task: the optimal rejector's own operating
    // point should not lose to either extreme of the curve.
    {
      ExperimentConfig small;
      small.task = {5, 4, 2.0, 1.0, 10, 0, 3000, 200, seed};
      small.id_experts = 2;
      small.ood_experts = 1;
      small.context_size = 0;
      const World world = build_world(small, 0.2, 1, seed);
      std::vector<std::vector<double>> acc;
      std::vector<std::vector<int>> preds;
      for (const auto* cohort : {&world.id_cohort, &world.ood_cohort}) {
        for (const auto& m : *cohort) {
          acc.push_back(world.population[static_cast<std::size_t>(m.expert_id)].true_accuracies(5));
          preds.push_back(m.test_predictions);
        }
      }
      const auto ref = theory::bayes_optimal_reference(world.task, acc, preds);
      const double n = static_cast<double>(ref.defers.size());
      const double rate =
          static_cast<double>(std::count(ref.defers.begin(), ref.defers.end(), true)) / n;
      const double at_rate = ref.curves.system.at(std::round(rate * n) / n);
      const double extremes = std::max(ref.curves.system.at(0.0), ref.curves.system.at(1.0));
      json params{{"K", 5}, {"dim", 4}, {"experts", 3}, {"test_size", 3000}, {"seed", seed}};
      report.rows.push_back({"bayes_operating_point", params.dump(), at_rate - extremes, -0.01,
                             at_rate - extremes >= -0.01});
    }
  }
  return report;
}

void write_theory_csv(std::ostream& out, const TheoryReport& report) {
  out << "check,param_json,observed,threshold,pass\n";
  auto quote = [](const std::string& s) {
    std::string q = "\"";
    for (char c : s) {
      if (c == '"') q += '"';
      q += c;
    }
    return q + '"';
  };
  for (const auto& r : report.rows) {
    out << r.check << ',' << quote(r.params) << ',' << csv::format_double(r.observed) << ','
        << csv::format_double(r.threshold) << ',' << (r.pass ? "pass" : "fail") << '\n';
  }
}

}  // namespace eal2d::harness
