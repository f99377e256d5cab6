#pragma once

// Experiment harness: builds seeded worlds (task + expert population), trains
// the deferral systems, evaluates ID and OOD cohorts, and writes CSV
// artifacts plus a JSON manifest.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "eal2d/config.hpp"
#include "eal2d/deferral.hpp"
#include "eal2d/evaluation.hpp"
#include "eal2d/simulation.hpp"

namespace eal2d::harness {

// "<semver>-<git describe>" baked in at build time.
std::string version_string();

// Stream ids used with sim::derive_seed(seed, stream). Collected here so every
// consumer draws from the same place.
namespace streams {
inline constexpr std::uint64_t kModelInit = 500;
inline constexpr std::uint64_t kTraining = 501;
inline constexpr std::uint64_t kBaselineChoice = 600;
inline constexpr std::uint64_t kContextBase = 1000;      // + expert id
inline constexpr std::uint64_t kTestPredictionBase = 2000;
inline constexpr std::uint64_t kQueryPredictionBase = 3000;
inline constexpr std::uint64_t kPriorsTarget = 4000;
}  // namespace streams

// Everything fixed by (config, overlap, expertise, seed) before training.
struct World {
  double overlap = 0.0;
  int expertise = 1;
  std::uint64_t seed = 0;
  sim::PartitionedDataset task;
  std::vector<sim::SimulatedExpertSpec> population;
  std::vector<defer::TrainingExpert> training_experts;  // ID experts only
  // [example][ID expert], for the baseline
  std::vector<std::vector<int>> train_predictions;
  std::vector<std::vector<int>> validation_predictions;
  std::vector<eval::CohortMember> id_cohort;
  std::vector<eval::CohortMember> ood_cohort;
};

World build_world(const ExperimentConfig& cfg, double overlap, int expertise, std::uint64_t seed);

nn::TrainConfig training_config(const ExperimentConfig& cfg, std::uint64_t seed);

// Throws TrainingDivergence.
defer::TrainResult train_method(const ExperimentConfig& cfg, const World& world,
                                defer::Method method);

struct CohortOutcome {
  std::string cohort;  // "id" or "ood"
  eval::CurvePair curves;
  std::vector<eval::MetricRow> rows;
  double aursac = 0.0;  // full range
  double aurdac = 0.0;
  double oracle_aursac = 0.0;
  bool bayes_ceiling_ok = true;
};

// Evaluates a trained model against both cohorts of `world`.
std::vector<CohortOutcome> evaluate_world(const ExperimentConfig& cfg, const World& world,
                                          const defer::L2dModel& model);

struct RunOutcome {
  defer::Method method = defer::Method::EaL2d;
  double overlap = 0.0;
  int expertise = 1;
  std::uint64_t seed = 0;
  bool diverged = false;
  std::string message;
  double classifier_accuracy = 0.0;
  int epochs_run = 0;
  std::vector<CohortOutcome> cohorts;

  const CohortOutcome& cohort(const std::string& name) const;
};

struct ExperimentResult {
  std::vector<RunOutcome> runs;

  bool all_diverged() const;
  const RunOutcome& find(defer::Method method, double overlap, int expertise,
                         std::uint64_t seed) const;
};

// Runs every (overlap, expertise, seed, method) combination in the config.
// Divergence is recorded per run and the remaining runs continue. When
// `out_dir` is set, writes curves/, metrics/, summary.csv and manifest.json.
ExperimentResult run_experiment(const ExperimentConfig& cfg,
                                const std::optional<std::string>& out_dir);

enum class SweepKind { Diversity, MultiExpertise };
SweepKind parse_sweep_kind(const std::string& name);
std::string to_string(SweepKind kind);

struct SweepRow {
  double value = 0.0;  // overlap probability or expertise count
  std::uint64_t seed = 0;
  std::string cohort;
  double ea_l2d_aurdac = 0.0;
  double pop_avg_aurdac = 0.0;
  double gap() const { return ea_l2d_aurdac - pop_avg_aurdac; }
};

struct SweepResult {
  ExperimentResult experiment;
  std::vector<SweepRow> rows;  // diverged runs are omitted
};

// Diversity: overlap grid (default 0.2, 0.5, 0.8) with the configured
// population. Multi-expertise: one ID and one OOD expert, expertise grid
// (default 1, 2, 3). Both methods are always trained. Writes sweep.csv in
// addition to the experiment artifacts.
SweepResult run_sweep(const ExperimentConfig& cfg, SweepKind kind,
                      const std::optional<std::vector<double>>& grid,
                      const std::optional<std::string>& out_dir);

struct PriorsArm {
  std::string name;
  eval::CurvePair curves;
  double aursac = 0.0;
  double aurdac = 0.0;
  double oracle_aursac = 0.0;
};

struct PriorsSeedResult {
  std::uint64_t seed = 0;
  bool diverged = false;
  std::string message;
  std::vector<PriorsArm> arms;  // accurate, uninformative, misdirected

  const PriorsArm& arm(const std::string& name) const;
};

struct PriorsStudyResult {
  std::vector<PriorsSeedResult> seeds;
};

// Trains EA-L2D once per seed on the configured ID population, then scores a
// single zero-context target expert under each prior arm. The target's test
// predictions are drawn once per seed and shared by all arms. In prior files
// the target expert has expert_id 0.
PriorsStudyResult run_priors_study(const ExperimentConfig& cfg,
                                   const std::optional<std::string>& out_dir);

struct TheoryRow {
  std::string check;
  std::string params;  // compact JSON
  double observed = 0.0;
  double threshold = 0.0;
  bool pass = false;
};

struct TheoryReport {
  std::vector<TheoryRow> rows;
  std::vector<std::string> notes;
  bool all_pass() const;
};

struct TheoryOptions {
  std::vector<std::uint64_t> seeds;  // empty: one default seed
  double n_scale = 1.0;              // multiplies the sample bound
  int trials = 2000;
  int threads = 1;
};

TheoryReport run_theory_checks(const TheoryOptions& options);
void write_theory_csv(std::ostream& out, const TheoryReport& report);

}  // namespace eal2d::harness
