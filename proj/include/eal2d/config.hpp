#pragma once

// Experiment configuration: a flat JSON object with a strict schema. Unknown
// keys are rejected; omitted keys take the defaults below (see README for the
// full table).

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "eal2d/deferral.hpp"
#include "eal2d/evaluation.hpp"
#include "eal2d/nn.hpp"
#include "eal2d/simulation.hpp"

namespace eal2d::harness {

struct PriorsStudyConfig {
  int target_class = 0;
  // Unset: (target + K/2 + 1) mod K, i.e. class 6 for K = 10 and target 0.
  std::optional<int> misdirected_class;
  double target_overlap = 0.2;
  double elicited_accuracy = 0.8;
  double elicited_confidence = 0.8;
  double strength = 15.0;
  // Optional prior files, one per arm; the arm is named after the file stem.
  // When empty the accurate / uninformative / misdirected arms are built
  // from the fields above.
  std::vector<std::string> prior_files;
};

struct ExperimentConfig {
  sim::SyntheticTaskSpec task{10, 16, 2.6, 1.0, 4000, 1000, 4000, 2000, 1};
  int id_experts = 5;
  int ood_experts = 5;
  std::vector<double> overlap_grid{0.2};
  std::vector<int> expertise_grid{1};
  int context_size = 150;
  std::vector<defer::Method> methods{defer::Method::EaL2d};
  std::optional<std::string> prior_file;
  double prior_strength = expert::kDefaultPriorStrength;
  nn::TrainConfig train{0.05, 64, 30, 0.0005, 0, 10};
  defer::Architecture architecture;
  std::optional<int> context_subsample;  // half of each context when unset
  std::vector<eval::DeferralRange> ranges{{0.0, 1.0}};
  std::vector<std::uint64_t> seeds{1};
  PriorsStudyConfig priors;
};

struct ParsedConfig {
  ExperimentConfig config;
  std::vector<std::string> warnings;
};

int misdirected_class(const ExperimentConfig& cfg);

// Throws InvalidInput naming the offending key.
ParsedConfig parse_config_text(const std::string& text);
ParsedConfig parse_config(const std::string& path);

// Complete, normalised echo of every field (defaults included) as JSON.
std::string config_to_json(const ExperimentConfig& cfg);

}  // namespace eal2d::harness
