#pragma once

// Synthetic Gaussian tasks, CSV datasets and simulated experts.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "eal2d/expert_model.hpp"

namespace eal2d::sim {

using Rng = std::mt19937_64;

// Independent stream for (seed, stream) pairs; splitmix64 mixing.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

struct LabeledExample {
  Eigen::VectorXd features;
  int label = 0;
};

// Known class-conditional densities: N(mean_k, noise_scale^2 I), equal priors.
struct GaussianModel {
  std::vector<Eigen::VectorXd> class_means;
  double noise_scale = 1.0;

  // Exact posterior P(Y = k | x).
  Eigen::VectorXd posterior(const Eigen::VectorXd& x) const;
};

struct Dataset {
  int num_classes = 0;
  int feature_dim = 0;
  std::vector<LabeledExample> examples;

  std::size_t size() const { return examples.size(); }
};

struct SyntheticTaskSpec {
  int num_classes = 10;
  int feature_dim = 16;
  double separation = 2.0;
  double noise_scale = 1.0;
  int train_size = 4000;
  int validation_size = 1000;
  int test_size = 4000;
  int context_pool_size = 2000;
  std::uint64_t seed = 1;

  void validate() const;
};

struct PartitionedDataset {
  Dataset train;
  Dataset validation;
  Dataset test;
  Dataset context_pool;
  std::optional<GaussianModel> model;  // absent for ingested data
};

PartitionedDataset generate_gaussian_task(const SyntheticTaskSpec& spec);

struct LoadedDataset {
  Dataset data;
  std::vector<std::string> warnings;
};

// Header "y,f0,f1,...". K is inferred as max label + 1; missing labels below
// that produce a warning rather than an error.
LoadedDataset read_csv_dataset(std::istream& in);
LoadedDataset load_csv_dataset(const std::string& path);
void write_csv_dataset(std::ostream& out, const Dataset& data);

struct SimulatedExpertSpec {
  int expert_id = 0;
  std::vector<int> expertise_classes;  // sorted, nonempty
  double overlap_probability = 0.0;
  int context_size = 0;
  bool in_distribution = true;

  bool is_expert_in(int label) const;
  // 1 on expertise classes, p + (1 - p)/K elsewhere.
  double true_accuracy(int label, int num_classes) const;
  std::vector<double> true_accuracies(int num_classes) const;
};

// The first id_count experts are tagged in-distribution. With one expertise
// class per expert the classes are disjoint across the whole population;
// otherwise each expert draws its own classes without replacement.
std::vector<SimulatedExpertSpec> make_population(int num_classes, int id_count, int ood_count,
                                                 double overlap_probability,
                                                 int expertise_per_expert, int context_size,
                                                 std::uint64_t seed);

// Oracle on expertise classes; otherwise correct with probability p and a
// uniform draw over all K labels (possibly correct) the rest of the time.
int expert_predict(const SimulatedExpertSpec& expert, int true_label, int num_classes, Rng& rng);

struct ContextRecord {
  LabeledExample example;
  int prediction = 0;
};

// Class-stratified draw of expert.context_size pool examples without
// replacement, ⌊N/K⌋ or ⌈N/K⌉ per class.
std::vector<ContextRecord> draw_context_set(const SimulatedExpertSpec& expert,
                                            const Dataset& context_pool, Rng& rng);

std::vector<expert::ContextExample> to_context_examples(std::span<const ContextRecord> records);

}  // namespace eal2d::sim
