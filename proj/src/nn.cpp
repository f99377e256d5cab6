#include "eal2d/nn.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "eal2d/error.hpp"

namespace eal2d::nn {

namespace {

Vector activate(const Vector& z, Activation act) {
  if (act == Activation::Relu) return z.cwiseMax(0.0);
  return z;
}

std::vector<DenseLayer> build_layers(const std::vector<int>& sizes, Activation hidden) {
  if (sizes.size() < 2) throw InvalidInput("network needs at least input and output sizes");
  for (int s : sizes) {
    if (s < 1) throw InvalidInput("layer sizes must be positive");
  }
  std::vector<DenseLayer> layers;
  for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
    DenseLayer layer;
    layer.weights = Matrix::Zero(sizes[i + 1], sizes[i]);
    layer.bias = Vector::Zero(sizes[i + 1]);
    layer.activation = (i + 2 == sizes.size()) ? Activation::Identity : hidden;
    layers.push_back(std::move(layer));
  }
  return layers;
}

}  // namespace

DenseNet::DenseNet(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    if (l.bias.size() != l.weights.rows())
      throw InvalidInput("layer " + std::to_string(i) + ": bias length does not match weight rows");
    if (i > 0 && layers_[i - 1].output_dim() != l.input_dim())
      throw InvalidInput("layer " + std::to_string(i) + ": input dim " +
                         std::to_string(l.input_dim()) + " does not match previous output dim " +
                         std::to_string(layers_[i - 1].output_dim()));
  }
}

DenseNet DenseNet::glorot(const std::vector<int>& sizes, Activation hidden, std::mt19937_64& rng) {
  auto layers = build_layers(sizes, hidden);
  for (auto& l : layers) {
    const double limit = std::sqrt(6.0 / (l.input_dim() + l.output_dim()));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (Eigen::Index c = 0; c < l.weights.cols(); ++c)
      for (Eigen::Index r = 0; r < l.weights.rows(); ++r) l.weights(r, c) = dist(rng);
  }
  return DenseNet(std::move(layers));
}

DenseNet DenseNet::zeros(const std::vector<int>& sizes, Activation hidden) {
  return DenseNet(build_layers(sizes, hidden));
}

int DenseNet::input_dim() const { return layers_.empty() ? 0 : layers_.front().input_dim(); }
int DenseNet::output_dim() const { return layers_.empty() ? 0 : layers_.back().output_dim(); }

std::size_t DenseNet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += l.weights.size() + l.bias.size();
  return n;
}

double& DenseNet::parameter(std::size_t index) {
  for (auto& l : layers_) {
    const auto w = static_cast<std::size_t>(l.weights.size());
    if (index < w) return l.weights.data()[index];
    index -= w;
    const auto b = static_cast<std::size_t>(l.bias.size());
    if (index < b) return l.bias.data()[index];
    index -= b;
  }
  throw InvalidInput("parameter index out of range");
}

double DenseNet::parameter(std::size_t index) const {
  return const_cast<DenseNet*>(this)->parameter(index);
}

bool DenseNet::all_finite() const {
  return std::all_of(layers_.begin(), layers_.end(), [](const DenseLayer& l) {
    return l.weights.allFinite() && l.bias.allFinite();
  });
}

bool operator==(const DenseNet& a, const DenseNet& b) {
  if (a.layers_.size() != b.layers_.size()) return false;
  for (std::size_t i = 0; i < a.layers_.size(); ++i) {
    const auto& x = a.layers_[i];
    const auto& y = b.layers_[i];
    if (x.activation != y.activation || x.weights.rows() != y.weights.rows() ||
        x.weights.cols() != y.weights.cols() || x.weights != y.weights || x.bias != y.bias)
      return false;
  }
  return true;
}

GradientBundle GradientBundle::zeros_like(const DenseNet& net) {
  GradientBundle g;
  for (const auto& l : net.layers()) {
    g.weights.push_back(Matrix::Zero(l.weights.rows(), l.weights.cols()));
    g.biases.push_back(Vector::Zero(l.bias.size()));
  }
  return g;
}

bool GradientBundle::shape_matches(const DenseNet& net) const {
  const auto& layers = net.layers();
  if (weights.size() != layers.size() || biases.size() != layers.size()) return false;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (weights[i].rows() != layers[i].weights.rows() ||
        weights[i].cols() != layers[i].weights.cols() || biases[i].size() != layers[i].bias.size())
      return false;
  }
  return true;
}

bool GradientBundle::all_finite() const {
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (!weights[i].allFinite() || !biases[i].allFinite()) return false;
  }
  return true;
}

double GradientBundle::parameter(std::size_t index) const {
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const auto w = static_cast<std::size_t>(weights[i].size());
    if (index < w) return weights[i].data()[index];
    index -= w;
    const auto b = static_cast<std::size_t>(biases[i].size());
    if (index < b) return biases[i].data()[index];
    index -= b;
  }
  throw InvalidInput("gradient index out of range");
}

GradientBundle& GradientBundle::operator+=(const GradientBundle& other) {
  if (weights.empty()) {
    *this = other;
    return *this;
  }
  if (other.weights.size() != weights.size()) throw InvalidInput("gradient bundles differ in depth");
  for (std::size_t i = 0; i < weights.size(); ++i) {
    weights[i] += other.weights[i];
    biases[i] += other.biases[i];
  }
  return *this;
}

GradientBundle& GradientBundle::operator*=(double factor) {
  for (std::size_t i = 0; i < weights.size(); ++i) {
    weights[i] *= factor;
    biases[i] *= factor;
  }
  return *this;
}

ForwardTrace forward_trace(const DenseNet& net, const Vector& input) {
  if (net.empty()) throw InvalidInput("forward on an empty network");
  if (input.size() != net.input_dim())
    throw InvalidInput("input length " + std::to_string(input.size()) +
                       " does not match network input dim " + std::to_string(net.input_dim()));
  ForwardTrace trace;
  trace.input = input;
  const Vector* a = &trace.input;
  for (const auto& l : net.layers()) {
    trace.pre.push_back(l.weights * *a + l.bias);
    trace.post.push_back(activate(trace.pre.back(), l.activation));
    a = &trace.post.back();
  }
  return trace;
}

Vector forward(const DenseNet& net, const Vector& input) {
  return forward_trace(net, input).output();
}

Backward backward(const DenseNet& net, const ForwardTrace& trace, const Vector& upstream) {
  const auto& layers = net.layers();
  if (trace.pre.size() != layers.size())
    throw InvalidInput("forward trace does not belong to this network");
  if (upstream.size() != net.output_dim())
    throw InvalidInput("upstream gradient length " + std::to_string(upstream.size()) +
                       " does not match network output dim " + std::to_string(net.output_dim()));

  Backward out;
  out.gradient = GradientBundle::zeros_like(net);
  Vector delta = upstream;
  for (std::size_t i = layers.size(); i-- > 0;) {
    const auto& l = layers[i];
    if (l.activation == Activation::Relu)
      delta = delta.cwiseProduct((trace.pre[i].array() > 0.0).cast<double>().matrix());
    const Vector& a_prev = (i == 0) ? trace.input : trace.post[i - 1];
    out.gradient.weights[i].noalias() = delta * a_prev.transpose();
    out.gradient.biases[i] = delta;
    delta = l.weights.transpose() * delta;
  }
  out.input_gradient = std::move(delta);
  return out;
}

Backward backward(const DenseNet& net, const Vector& input, const Vector& upstream) {
  return backward(net, forward_trace(net, input), upstream);
}

Vector softmax(const Vector& logits) {
  if (logits.size() == 0) throw InvalidInput("softmax of an empty vector");
  const double m = logits.maxCoeff();
  Vector e = (logits.array() - m).exp().matrix();
  return e / e.sum();
}

double log_sum_exp(const Vector& logits) {
  if (logits.size() == 0) throw InvalidInput("log-sum-exp of an empty vector");
  const double m = logits.maxCoeff();
  return m + std::log((logits.array() - m).exp().sum());
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
    throw InvalidInput("learning_rate must be positive");
  if (batch_size < 1) throw InvalidInput("batch_size must be >= 1");
  if (epochs < 0) throw InvalidInput("epochs must be >= 0");
  if (!(weight_decay >= 0.0)) throw InvalidInput("weight_decay must be >= 0");
  if (patience < 0) throw InvalidInput("patience must be >= 0");
}

void sgd_step(DenseNet& net, const GradientBundle& grads, const TrainConfig& cfg) {
  if (!grads.shape_matches(net)) throw InvalidInput("gradient shapes do not match network");
  if (!grads.all_finite()) throw TrainingDivergence("non-finite gradient in sgd_step");
  auto& layers = net.layers();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    layers[i].weights -= cfg.learning_rate * (grads.weights[i] + cfg.weight_decay * layers[i].weights);
    layers[i].bias -= cfg.learning_rate * (grads.biases[i] + cfg.weight_decay * layers[i].bias);
  }
  if (!net.all_finite()) throw TrainingDivergence("non-finite weights after sgd_step");
}

GradientCheck finite_difference_check(const DenseNet& net, const NetObjective& objective,
                                      double epsilon) {
  if (!(epsilon >= 1e-7 && epsilon <= 1e-3))
    throw InvalidInput("finite-difference epsilon must lie in [1e-7, 1e-3]");
  const LossAndGradient base = objective(net);
  if (!base.gradient.shape_matches(net)) throw InvalidInput("objective gradient shape mismatch");

  // Left/right quotients differing by more than this indicate a kink.
  const double kink_tolerance = std::sqrt(epsilon);

  GradientCheck result;
  DenseNet probe = net;
  for (std::size_t i = 0; i < net.parameter_count(); ++i) {
    const double original = probe.parameter(i);
    probe.parameter(i) = original + epsilon;
    const double up = objective(probe).loss;
    probe.parameter(i) = original - epsilon;
    const double down = objective(probe).loss;
    probe.parameter(i) = original;

    const double right = (up - base.loss) / epsilon;
    const double left = (base.loss - down) / epsilon;
    const double central = (up - down) / (2.0 * epsilon);
    if (std::abs(right - left) > kink_tolerance * std::max(1.0, std::abs(central))) {
      ++result.skipped;
      continue;
    }
    const double err =
        std::abs(base.gradient.parameter(i) - central) / std::max(1.0, std::abs(central));
    result.max_relative_error = std::max(result.max_relative_error, err);
    ++result.checked;
  }
  return result;
}

}  // namespace eal2d::nn
