#pragma once

// Monte Carlo checks of the posterior-mean convergence and expertise-class
// identification guarantees, and the Bayes-optimal deferral reference for
// Gaussian tasks.

#include <cstdint>
#include <span>
#include <vector>

#include "eal2d/evaluation.hpp"
#include "eal2d/simulation.hpp"

namespace eal2d::theory {

struct TrialConfig {
  std::vector<double> theta;  // true per-class accuracy
  std::int64_t samples_per_class = 0;
  int trials = 1000;
  double delta = 0.05;
  std::uint64_t seed = 1;

  int num_classes() const { return static_cast<int>(theta.size()); }
  int true_class() const;  // argmax theta, lowest on ties
  double gap() const;      // theta[k*] - max_{k != k*} theta[k]
  void validate() const;
};

// |mu - theta| after n Bernoulli(theta) draws under a uniform prior, for
// each n of the schedule (fresh draws per entry).
std::vector<double> prop1_convergence_trial(double theta, std::span<const std::int64_t> schedule,
                                            sim::Rng& rng);

// Fraction of trials in which the argmax posterior mean is not the true
// class. Trial i uses stream derive_seed(seed, i), so any thread count gives
// the same count.
double prop2_misidentification_rate(const TrialConfig& cfg, int threads = 1);

struct OracleReference {
  eval::CurvePair curves;
  std::vector<eval::ScoredCase> cases;
  std::vector<bool> defers;  // r*(x) for the best expert per case
  double classifier_accuracy = 0.0;
};

// Bayes classifier argmax_y P(y|x) and rejector
// 1[sum_y P(y|x) acc_E(y) >= max_y P(y|x)] computed from the exact Gaussian
// posteriors. Cases are ranked by (best expert's expected accuracy -
// max_y P(y|x)); realised correctness uses the supplied expert predictions,
// indexed [expert][test case]. Throws UnsupportedTask without a Gaussian
// model.
OracleReference bayes_optimal_reference(const sim::PartitionedDataset& task,
                                        std::span<const std::vector<double>> expert_accuracies,
                                        std::span<const std::vector<int>> expert_predictions);

}  // namespace eal2d::theory
