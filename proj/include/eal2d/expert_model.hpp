#pragma once

// Beta-Binomial model of a single expert's per-class accuracy.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace eal2d::expert {

struct ContextExample {
  int true_label = 0;
  int expert_prediction = 0;
};

struct ClassCounts {
  std::vector<int> n;  // samples with true label k
  std::vector<int> t;  // correct expert predictions among them

  int num_classes() const { return static_cast<int>(n.size()); }
};

struct BetaParams {
  double alpha = 1.0;
  double beta = 1.0;

  void validate() const;
  friend bool operator==(const BetaParams&, const BetaParams&) = default;
};

inline constexpr double kDefaultPriorStrength = 10.0;

// Self-assessed accuracy p_k and confidence c_k per class, one shared
// strength s >= 2.
struct PriorElicitation {
  std::vector<double> accuracy;    // p_k in [0,1]
  std::vector<double> confidence;  // c_k in [0,1]
  double strength = kDefaultPriorStrength;

  static PriorElicitation uninformative(int num_classes, double strength = kDefaultPriorStrength);
  int num_classes() const { return static_cast<int>(accuracy.size()); }
  void validate() const;
};

struct BehaviouralRepresentation {
  std::vector<double> mu;            // posterior mean accuracy per class
  std::vector<BetaParams> posterior;
  int expertise_class = 0;           // argmax mu, lowest index on ties

  int num_classes() const { return static_cast<int>(mu.size()); }
  friend bool operator==(const BehaviouralRepresentation&,
                         const BehaviouralRepresentation&) = default;
};

ClassCounts count_context(std::span<const ContextExample> context, int num_classes);

// alpha = 1 + c p (s - 2), beta = 1 + c (1 - p)(s - 2)
BetaParams elicit_prior(const PriorElicitation& elicitation, int k);
std::vector<BetaParams> elicit_priors(const PriorElicitation& elicitation);
std::vector<BetaParams> uniform_priors(int num_classes);

BetaParams update_posterior(const BetaParams& prior, int n, int t);
double posterior_mean(const BetaParams& params);

// Lowest index among the maxima.
int argmax_lowest(std::span<const double> values);

BehaviouralRepresentation build_representation(std::span<const ContextExample> context,
                                               std::span<const BetaParams> priors,
                                               int num_classes);
BehaviouralRepresentation build_representation(
    std::span<const ContextExample> context,
    const std::optional<PriorElicitation>& elicitation, int num_classes);

// Smallest n with n >= ln(2K/delta) / (2 (gap/2)^2).
std::int64_t sample_complexity_bound(int num_classes, double delta, double gap);

// Prior elicitation file: CSV with header "expert_id,class,p,c,s", one row
// per (expert, class). s must agree across an expert's rows and every class
// in [0, K) must be present.
std::map<int, PriorElicitation> read_prior_csv(std::istream& in, int num_classes);
std::map<int, PriorElicitation> load_prior_file(const std::string& path, int num_classes);
void write_prior_csv(std::ostream& out, const std::map<int, PriorElicitation>& priors);

}  // namespace eal2d::expert
