#pragma once

// Joint classifier/rejector: rejector inputs, deferral logit, the
// expert-agnostic surrogate loss, the population-mode baseline loss, the
// training loop and deferral decisions.

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "eal2d/expert_model.hpp"
#include "eal2d/nn.hpp"
#include "eal2d/simulation.hpp"

namespace eal2d::defer {

using nn::Vector;

// The four scalars fed to the rejector, in network input order.
struct RejectorInput {
  double rho_expertise = 0.0;  // classifier softmax at the expert's expertise class
  double rho_max = 0.0;        // largest classifier softmax
  double mu_at_kstar = 0.0;    // expert accuracy at the classifier's top class
  double mu_expertise = 0.0;   // expert accuracy at its expertise class
  int top_class = 0;           // k*, lowest index on ties
  int expertise_class = 0;     // E*

  Vector as_vector() const;
  friend bool operator==(const RejectorInput&, const RejectorInput&) = default;
};

inline constexpr int kRejectorInputs = 4;

RejectorInput assemble_rejector_inputs(const Vector& class_softmax,
                                       const expert::BehaviouralRepresentation& rep);

double deferral_logit(const nn::DenseNet& rejector, const RejectorInput& input);

struct JointLogits {
  Vector class_logits;
  double deferral_logit = 0.0;

  int num_classes() const { return static_cast<int>(class_logits.size()); }
  // (g_1..g_K, g_defer)
  Vector stacked() const;
};

struct LossBreakdown {
  double classifier_term = 0.0;
  double deferral_term = 0.0;
  double total = 0.0;
  Vector logit_gradient;  // d total / d stacked logits, length K + 1
};

// -log q_y - mu_y * 1[E* = y] * log q_defer, q = softmax over the K + 1
// logits. Takes no expert prediction for the query point.
LossBreakdown ea_l2d_loss(const JointLogits& joint, int label,
                          const expert::BehaviouralRepresentation& rep);

// Mode of the predictions, lowest class on ties.
int mode_prediction(std::span<const int> predictions);

// -log q_y - 1[mode = y] * log q_defer.
LossBreakdown pop_avg_loss(const JointLogits& joint, int label, std::span<const int> predictions);

struct DeferralDecision {
  bool defer = false;
  int predicted_class = -1;  // valid when !defer
  int chosen_expert = -1;    // valid when defer
};

// Defers iff g_defer >= max_k g_k.
DeferralDecision decide(const JointLogits& joint, int expert_id);

enum class Method { EaL2d, PopAvg };
std::string to_string(Method method);
Method parse_method(const std::string& name);

// Classifier h (features -> K logits) and rejector. The EA-L2D rejector maps
// the four RejectorInput scalars to g_defer; the baseline rejector sees the
// raw features.
struct L2dModel {
  Method method = Method::EaL2d;
  int num_classes = 0;
  nn::DenseNet classifier;
  nn::DenseNet rejector;

  friend bool operator==(const L2dModel&, const L2dModel&) = default;
};

struct Architecture {
  std::vector<int> classifier_hidden{32};
  std::vector<int> rejector_hidden{32, 32};
};

L2dModel make_model(Method method, int feature_dim, int num_classes, const Architecture& arch,
                    std::uint64_t seed);

Vector class_logits(const L2dModel& model, const Vector& features);

// `rep` is required for EA-L2D and ignored by the baseline.
JointLogits joint_logits(const L2dModel& model, const Vector& features,
                         const expert::BehaviouralRepresentation* rep);

// Loss and parameter gradients for a single query point, summed over experts.
struct ExampleGradient {
  double loss = 0.0;
  nn::GradientBundle classifier;
  nn::GradientBundle rejector;
};

// The deferral term is differentiated through the classifier softmax as well
// as through the rejector.
ExampleGradient ea_l2d_example(const L2dModel& model, const Vector& features, int label,
                               std::span<const expert::BehaviouralRepresentation> reps);
ExampleGradient pop_avg_example(const L2dModel& model, const Vector& features, int label,
                                std::span<const int> predictions);

struct TrainingExpert {
  int expert_id = 0;
  std::vector<expert::ContextExample> context;
  std::vector<expert::BetaParams> priors;  // one per class
};

struct TrainResult {
  L2dModel model;
  std::vector<double> train_loss;       // mean batch loss per epoch
  std::vector<double> validation_loss;  // per epoch, full contexts
  int best_epoch = -1;
  int epochs_run = 0;
};

// Mini-batch SGD over the query set. Every batch draws a fresh context subset
// of size `context_subsample` per expert (half of each expert's context when
// unset) and rebuilds the representations. With cfg.patience > 0 training
// stops after that many epochs without validation improvement and the best
// weights are restored.
TrainResult train(L2dModel model, const sim::Dataset& query, const sim::Dataset& validation,
                  std::span<const TrainingExpert> experts, const nn::TrainConfig& cfg,
                  std::optional<int> context_subsample = std::nullopt);

// Baseline training; predictions are indexed [example][expert].
TrainResult train_pop_avg(L2dModel model, const sim::Dataset& query,
                          const sim::Dataset& validation,
                          const std::vector<std::vector<int>>& query_predictions,
                          const std::vector<std::vector<int>>& validation_predictions,
                          const nn::TrainConfig& cfg);

}  // namespace eal2d::defer
