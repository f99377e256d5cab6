#pragma once

// Dense feed-forward networks with explicit forward/backward passes.
// Everything is double precision; networks are plain values.

#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include <Eigen/Core>

namespace eal2d::nn {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

enum class Activation { Relu, Identity };

struct DenseLayer {
  Matrix weights;  // [out x in]
  Vector bias;     // [out]
  Activation activation = Activation::Identity;

  int input_dim() const { return static_cast<int>(weights.cols()); }
  int output_dim() const { return static_cast<int>(weights.rows()); }
};

class DenseNet {
 public:
  DenseNet() = default;
  // Throws InvalidInput if adjacent layers do not compose.
  explicit DenseNet(std::vector<DenseLayer> layers);

  // Glorot-uniform weights, zero biases. `sizes` = {in, hidden..., out};
  // hidden layers use `hidden`, the output layer is linear.
  static DenseNet glorot(const std::vector<int>& sizes, Activation hidden, std::mt19937_64& rng);
  static DenseNet zeros(const std::vector<int>& sizes, Activation hidden);

  int input_dim() const;
  int output_dim() const;
  bool empty() const { return layers_.empty(); }

  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::vector<DenseLayer>& layers() { return layers_; }

  // Flat parameter access: layer by layer, weights (column-major) then bias.
  std::size_t parameter_count() const;
  double& parameter(std::size_t index);
  double parameter(std::size_t index) const;

  bool all_finite() const;

  friend bool operator==(const DenseNet& a, const DenseNet& b);

 private:
  std::vector<DenseLayer> layers_;
};

// Pre- and post-activation values of every layer, retained for backward().
struct ForwardTrace {
  Vector input;
  std::vector<Vector> pre;   // z_i = W_i a_{i-1} + b_i
  std::vector<Vector> post;  // a_i = act(z_i)

  const Vector& output() const { return post.back(); }
};

struct GradientBundle {
  std::vector<Matrix> weights;
  std::vector<Vector> biases;

  static GradientBundle zeros_like(const DenseNet& net);
  bool shape_matches(const DenseNet& net) const;
  bool all_finite() const;
  double parameter(std::size_t index) const;  // same flat order as DenseNet
  GradientBundle& operator+=(const GradientBundle& other);
  GradientBundle& operator*=(double factor);
};

struct Backward {
  GradientBundle gradient;
  Vector input_gradient;
};

Vector forward(const DenseNet& net, const Vector& input);
ForwardTrace forward_trace(const DenseNet& net, const Vector& input);

// Reverse-mode pass for a scalar loss whose gradient w.r.t. the network
// output is `upstream`. relu'(0) is taken as 0.
Backward backward(const DenseNet& net, const ForwardTrace& trace, const Vector& upstream);
Backward backward(const DenseNet& net, const Vector& input, const Vector& upstream);

// Numerically stable softmax (max-subtracted).
Vector softmax(const Vector& logits);
double log_sum_exp(const Vector& logits);

struct TrainConfig {
  double learning_rate = 0.05;
  int batch_size = 64;
  int epochs = 40;
  double weight_decay = 0.0;
  std::uint64_t seed = 1;
  int patience = 0;  // early-stopping patience in epochs; 0 disables

  void validate() const;
};

// w <- w - lr * (grad + weight_decay * w). Throws TrainingDivergence on a
// non-finite gradient.
void sgd_step(DenseNet& net, const GradientBundle& grads, const TrainConfig& cfg);

struct LossAndGradient {
  double loss = 0.0;
  GradientBundle gradient;
};

// Evaluates a scalar objective of the network's parameters together with its
// analytic gradient.
using NetObjective = std::function<LossAndGradient(const DenseNet&)>;

struct GradientCheck {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  // Parameters whose left and right difference quotients disagree, i.e. a
  // relu kink sits within epsilon. They are excluded from the error.
  std::size_t skipped = 0;
};

// Compares the analytic gradient with central differences over every
// parameter: max |analytic - central| / max(1, |central|).
GradientCheck finite_difference_check(const DenseNet& net, const NetObjective& objective,
                                      double epsilon);

}  // namespace eal2d::nn
