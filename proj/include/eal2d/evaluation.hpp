#pragma once

// Deferral-budget evaluation: priorities, expert selection, accuracy vs
// deferral-rate curves and the normalised areas under them (AURSAC for the
// system curve, AURDAC for the deferred-case expert curve).

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "eal2d/deferral.hpp"
#include "eal2d/expert_model.hpp"
#include "eal2d/simulation.hpp"

namespace eal2d::eval {

struct ScoredCase {
  double priority = 0.0;  // in [-1, 1], higher defers first
  bool classifier_correct = false;
  bool expert_correct = false;  // for chosen_expert
  int chosen_expert = 0;
};

// q_defer - max_k q_k on the joint (K + 1)-way softmax; the deferral slot is
// the last entry.
double deferral_priority(const Eigen::VectorXd& joint_probabilities);

struct ExpertChoice {
  int expert = 0;  // position in the cohort
  double priority = 0.0;
};

// Highest priority, lowest position on ties.
ExpertChoice select_expert(std::span<const double> priorities);

struct CurvePoint {
  double rate = 0.0;
  double accuracy = 0.0;
};

struct Curve {
  std::vector<CurvePoint> points;  // strictly increasing rate

  void validate() const;
  // Linear interpolation between grid points.
  double at(double rate) const;
};

struct CurvePair {
  Curve system;
  Curve expert;
};

// Cases are deferred in descending priority (stable on ties). At d = j/N the
// system is right on the deferred top-j by the expert and on the remainder
// by the classifier; the expert curve is the accuracy over the deferred
// top-j, with d = 0 taking the d = 1/N value.
CurvePair build_curves(std::span<const ScoredCase> cases);

// Trapezoidal area over [d_min, d_max] divided by (d_max - d_min).
double area_under(const Curve& curve, double d_min, double d_max);

struct DeferralRange {
  double d_min = 0.0;
  double d_max = 1.0;

  void validate() const;
  friend bool operator==(const DeferralRange&, const DeferralRange&) = default;
};

struct MetricRow {
  std::string metric;  // AURSAC or AURDAC
  double d_min = 0.0;
  double d_max = 1.0;
  double value = 0.0;
  std::string cohort;
  std::uint64_t seed = 0;
};

std::vector<MetricRow> metric_rows(const CurvePair& curves, std::span<const DeferralRange> ranges,
                                   const std::string& cohort, std::uint64_t seed);

void write_curves_csv(std::ostream& out, const CurvePair& curves);
void write_metrics_csv(std::ostream& out, std::span<const MetricRow> rows);

// One expert of an evaluation cohort with its predictions on the test set.
struct CohortMember {
  int expert_id = 0;
  expert::BehaviouralRepresentation rep;
  std::vector<int> test_predictions;
};

// Scores every test case against the cohort. EA-L2D picks the
// highest-priority expert per case; the baseline's priority does not depend
// on the expert, so it picks uniformly at random from a stream seeded by
// `seed`. chosen_expert holds the cohort position.
std::vector<ScoredCase> score_cases(const defer::L2dModel& model, const sim::Dataset& test,
                                    std::span<const CohortMember> cohort, std::uint64_t seed);

double classifier_accuracy(const defer::L2dModel& model, const sim::Dataset& test);

}  // namespace eal2d::eval
