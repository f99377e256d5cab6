#include "eal2d/deferral.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "eal2d/error.hpp"

namespace eal2d::defer {

namespace {

int argmax_lowest(const Vector& v) {
  int best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = static_cast<int>(i);
  }
  return best;
}

void check_label(int label, int num_classes) {
  if (label < 0 || label >= num_classes)
    throw InvalidInput("label " + std::to_string(label) + " out of range for K = " +
                       std::to_string(num_classes));
}

// Cross entropy on the K + 1 logits with weight 1 on the label and
// `defer_weight` on the deferral slot.
LossBreakdown weighted_cross_entropy(const JointLogits& joint, int label, double defer_weight) {
  const Vector z = joint.stacked();
  const int K = joint.num_classes();
  const double lse = nn::log_sum_exp(z);
  LossBreakdown out;
  out.classifier_term = lse - z[label];
  out.deferral_term = defer_weight > 0.0 ? defer_weight * (lse - z[K]) : 0.0;
  out.total = out.classifier_term + out.deferral_term;
  const Vector q = (z.array() - lse).exp().matrix();
  out.logit_gradient = (1.0 + defer_weight) * q;
  out.logit_gradient[label] -= 1.0;
  out.logit_gradient[K] -= defer_weight;
  return out;
}

}  // namespace

Vector RejectorInput::as_vector() const {
  Vector v(kRejectorInputs);
  v << rho_expertise, rho_max, mu_at_kstar, mu_expertise;
  return v;
}

RejectorInput assemble_rejector_inputs(const Vector& class_softmax,
                                       const expert::BehaviouralRepresentation& rep) {
  if (class_softmax.size() != rep.num_classes())
    throw InvalidInput("classifier softmax has " + std::to_string(class_softmax.size()) +
                       " classes, representation has " + std::to_string(rep.num_classes()));
  if (rep.expertise_class < 0 || rep.expertise_class >= rep.num_classes())
    throw InvalidInput("expertise class out of range");
  RejectorInput in;
  in.top_class = argmax_lowest(class_softmax);
  in.expertise_class = rep.expertise_class;
  in.rho_expertise = class_softmax[rep.expertise_class];
  in.rho_max = class_softmax[in.top_class];
  in.mu_at_kstar = rep.mu[in.top_class];
  in.mu_expertise = rep.mu[rep.expertise_class];
  return in;
}

double deferral_logit(const nn::DenseNet& rejector, const RejectorInput& input) {
  if (rejector.input_dim() != kRejectorInputs || rejector.output_dim() != 1)
    throw InvalidInput("rejector must map 4 inputs to 1 output");
  return nn::forward(rejector, input.as_vector())[0];
}

Vector JointLogits::stacked() const {
  Vector z(class_logits.size() + 1);
  z << class_logits, deferral_logit;
  return z;
}

LossBreakdown ea_l2d_loss(const JointLogits& joint, int label,
                          const expert::BehaviouralRepresentation& rep) {
  const int K = joint.num_classes();
  check_label(label, K);
  if (rep.num_classes() != K) throw InvalidInput("representation class count mismatch");
  const double weight = (rep.expertise_class == label) ? rep.mu[label] : 0.0;
  return weighted_cross_entropy(joint, label, weight);
}

int mode_prediction(std::span<const int> predictions) {
  if (predictions.empty()) throw InvalidInput("mode of an empty prediction list");
  std::vector<int> sorted(predictions.begin(), predictions.end());
  std::sort(sorted.begin(), sorted.end());
  int best = sorted.front();
  std::size_t best_count = 0;
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i;
    while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
    if (j - i > best_count) {  // ascending scan keeps the lowest class on ties
      best = sorted[i];
      best_count = j - i;
    }
    i = j;
  }
  return best;
}

LossBreakdown pop_avg_loss(const JointLogits& joint, int label, std::span<const int> predictions) {
  check_label(label, joint.num_classes());
  const int mode = mode_prediction(predictions);
  return weighted_cross_entropy(joint, label, mode == label ? 1.0 : 0.0);
}

DeferralDecision decide(const JointLogits& joint, int expert_id) {
  if (joint.class_logits.size() == 0) throw InvalidInput("no class logits");
  DeferralDecision d;
  const int top = argmax_lowest(joint.class_logits);
  if (joint.deferral_logit >= joint.class_logits[top]) {
    d.defer = true;
    d.chosen_expert = expert_id;
  } else {
    d.predicted_class = top;
  }
  return d;
}

std::string to_string(Method method) {
  return method == Method::EaL2d ? "ea_l2d" : "pop_avg";
}

Method parse_method(const std::string& name) {
  if (name == "ea_l2d") return Method::EaL2d;
  if (name == "pop_avg") return Method::PopAvg;
  throw InvalidInput("unknown method \"" + name + "\" (expected ea_l2d or pop_avg)");
}

L2dModel make_model(Method method, int feature_dim, int num_classes, const Architecture& arch,
                    std::uint64_t seed) {
  if (num_classes < 2) throw InvalidInput("model needs K >= 2");
  if (feature_dim < 1) throw InvalidInput("model needs feature_dim >= 1");
  sim::Rng rng(sim::derive_seed(seed, 200));
  std::vector<int> c_sizes{feature_dim};
  c_sizes.insert(c_sizes.end(), arch.classifier_hidden.begin(), arch.classifier_hidden.end());
  c_sizes.push_back(num_classes);
  std::vector<int> r_sizes{method == Method::EaL2d ? kRejectorInputs : feature_dim};
  r_sizes.insert(r_sizes.end(), arch.rejector_hidden.begin(), arch.rejector_hidden.end());
  r_sizes.push_back(1);

  L2dModel model;
  model.method = method;
  model.num_classes = num_classes;
  model.classifier = nn::DenseNet::glorot(c_sizes, nn::Activation::Relu, rng);
  model.rejector = nn::DenseNet::glorot(r_sizes, nn::Activation::Relu, rng);
  return model;
}

Vector class_logits(const L2dModel& model, const Vector& features) {
  return nn::forward(model.classifier, features);
}

JointLogits joint_logits(const L2dModel& model, const Vector& features,
                         const expert::BehaviouralRepresentation* rep) {
  JointLogits joint;
  joint.class_logits = class_logits(model, features);
  if (model.method == Method::EaL2d) {
    if (rep == nullptr) throw InvalidInput("EA-L2D needs an expert representation");
    const auto input = assemble_rejector_inputs(nn::softmax(joint.class_logits), *rep);
    joint.deferral_logit = deferral_logit(model.rejector, input);
  } else {
    joint.deferral_logit = nn::forward(model.rejector, features)[0];
  }
  return joint;
}

ExampleGradient ea_l2d_example(const L2dModel& model, const Vector& features, int label,
                               std::span<const expert::BehaviouralRepresentation> reps) {
  const auto c_trace = nn::forward_trace(model.classifier, features);
  const Vector& logits = c_trace.output();
  const Vector rho = nn::softmax(logits);
  const int K = model.num_classes;

  ExampleGradient out;
  out.classifier = nn::GradientBundle::zeros_like(model.classifier);
  out.rejector = nn::GradientBundle::zeros_like(model.rejector);
  Vector d_logits = Vector::Zero(K);
  Vector d_rho = Vector::Zero(K);

  for (const auto& rep : reps) {
    const auto input = assemble_rejector_inputs(rho, rep);
    const auto r_trace = nn::forward_trace(model.rejector, input.as_vector());
    const JointLogits joint{logits, r_trace.output()[0]};
    const auto loss = ea_l2d_loss(joint, label, rep);
    out.loss += loss.total;
    d_logits += loss.logit_gradient.head(K);

    const double d_defer = loss.logit_gradient[K];
    const auto rb = nn::backward(model.rejector, r_trace, Vector::Constant(1, d_defer));
    out.rejector += rb.gradient;
    d_rho[input.expertise_class] += rb.input_gradient[0];
    d_rho[input.top_class] += rb.input_gradient[1];
  }

  // Softmax Jacobian: d g_j = rho_j (d rho_j - <rho, d rho>).
  d_logits += rho.cwiseProduct((d_rho.array() - rho.dot(d_rho)).matrix());
  out.classifier = nn::backward(model.classifier, c_trace, d_logits).gradient;
  return out;
}

ExampleGradient pop_avg_example(const L2dModel& model, const Vector& features, int label,
                                std::span<const int> predictions) {
  const auto c_trace = nn::forward_trace(model.classifier, features);
  const auto r_trace = nn::forward_trace(model.rejector, features);
  const JointLogits joint{c_trace.output(), r_trace.output()[0]};
  const auto loss = pop_avg_loss(joint, label, predictions);
  const int K = model.num_classes;

  ExampleGradient out;
  out.loss = loss.total;
  out.classifier = nn::backward(model.classifier, c_trace, loss.logit_gradient.head(K)).gradient;
  out.rejector =
      nn::backward(model.rejector, r_trace, Vector::Constant(1, loss.logit_gradient[K])).gradient;
  return out;
}

namespace {

void check_model(const L2dModel& model, const sim::Dataset& query, Method method) {
  if (model.method != method) throw InvalidInput("model was built for a different method");
  if (model.classifier.input_dim() != query.feature_dim ||
      model.classifier.output_dim() != model.num_classes)
    throw InvalidInput("classifier shape does not match the query data");
  if (query.num_classes != model.num_classes)
    throw InvalidInput("query data class count does not match the model");
  if (query.examples.empty()) throw InvalidInput("query data is empty");
}

// Runs the epoch/batch loop shared by both methods. `batch_gradient` returns
// (mean loss, classifier grads, rejector grads) for a list of example indices;
// `validation_loss` scores the current model.
template <typename BatchFn, typename ValFn>
TrainResult run_sgd(L2dModel model, std::size_t n, const nn::TrainConfig& cfg,
                    BatchFn&& batch_gradient, ValFn&& validation_loss) {
  cfg.validate();
  TrainResult result;
  sim::Rng rng(sim::derive_seed(cfg.seed, 300));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  L2dModel best = model;
  double best_val = std::numeric_limits<double>::infinity();
  int since_best = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t stop = std::min(n, start + static_cast<std::size_t>(cfg.batch_size));
      std::span<const std::size_t> batch(order.data() + start, stop - start);
      ExampleGradient g = batch_gradient(model, batch, rng);
      if (!std::isfinite(g.loss))
        throw TrainingDivergence("non-finite loss at epoch " + std::to_string(epoch) + " batch " +
                                 std::to_string(batches));
      try {
        nn::sgd_step(model.classifier, g.classifier, cfg);
        nn::sgd_step(model.rejector, g.rejector, cfg);
      } catch (const TrainingDivergence& e) {
        throw TrainingDivergence(std::string(e.what()) + " at epoch " + std::to_string(epoch) +
                                 " batch " + std::to_string(batches));
      }
      epoch_loss += g.loss;
      ++batches;
    }
    result.train_loss.push_back(epoch_loss / static_cast<double>(batches));
    const double val = validation_loss(model);
    result.validation_loss.push_back(val);
    ++result.epochs_run;
    if (!std::isfinite(val))
      throw TrainingDivergence("non-finite validation loss at epoch " + std::to_string(epoch));

    if (cfg.patience > 0) {
      if (val < best_val) {
        best_val = val;
        best = model;
        result.best_epoch = epoch;
        since_best = 0;
      } else if (++since_best >= cfg.patience) {
        break;
      }
    }
  }
  if (cfg.patience > 0 && result.best_epoch >= 0) {
    result.model = std::move(best);
  } else {
    result.best_epoch = result.epochs_run - 1;
    result.model = std::move(model);
  }
  return result;
}

}  // namespace

TrainResult train(L2dModel model, const sim::Dataset& query, const sim::Dataset& validation,
                  std::span<const TrainingExpert> experts, const nn::TrainConfig& cfg,
                  std::optional<int> context_subsample) {
  check_model(model, query, Method::EaL2d);
  if (experts.empty()) throw InvalidInput("training needs at least one expert");
  const int K = model.num_classes;
  for (const auto& e : experts) {
    if (static_cast<int>(e.priors.size()) != K)
      throw InvalidInput("expert " + std::to_string(e.expert_id) + " needs one prior per class");
    if (context_subsample && *context_subsample > static_cast<int>(e.context.size()))
      throw InvalidInput("context subsample size exceeds the context of expert " +
                         std::to_string(e.expert_id));
  }
  if (context_subsample && *context_subsample < 0)
    throw InvalidInput("context subsample size must be >= 0");

  std::vector<expert::BehaviouralRepresentation> full_reps;
  for (const auto& e : experts) full_reps.push_back(expert::build_representation(e.context, e.priors, K));

  auto batch_gradient = [&](const L2dModel& m, std::span<const std::size_t> batch,
                            sim::Rng& rng) {
    std::vector<expert::BehaviouralRepresentation> reps;
    reps.reserve(experts.size());
    std::vector<expert::ContextExample> subset;
    for (const auto& e : experts) {
      const std::size_t size = context_subsample
                                   ? static_cast<std::size_t>(*context_subsample)
                                   : e.context.size() / 2;
      std::vector<std::size_t> idx(e.context.size());
      std::iota(idx.begin(), idx.end(), 0);
      subset.clear();
      for (std::size_t j = 0; j < size; ++j) {
        std::uniform_int_distribution<std::size_t> pick(j, idx.size() - 1);
        std::swap(idx[j], idx[pick(rng)]);
        subset.push_back(e.context[idx[j]]);
      }
      reps.push_back(expert::build_representation(subset, e.priors, K));
    }
    ExampleGradient total;
    total.classifier = nn::GradientBundle::zeros_like(m.classifier);
    total.rejector = nn::GradientBundle::zeros_like(m.rejector);
    for (std::size_t i : batch) {
      const auto& ex = query.examples[i];
      auto g = ea_l2d_example(m, ex.features, ex.label, reps);
      total.loss += g.loss;
      total.classifier += g.classifier;
      total.rejector += g.rejector;
    }
    const double scale = 1.0 / static_cast<double>(batch.size() * reps.size());
    total.loss *= scale;
    total.classifier *= scale;
    total.rejector *= scale;
    return total;
  };

  auto validation_loss = [&](const L2dModel& m) {
    if (validation.examples.empty()) return 0.0;
    double sum = 0.0;
    for (const auto& ex : validation.examples) {
      const Vector logits = class_logits(m, ex.features);
      const Vector rho = nn::softmax(logits);
      for (const auto& rep : full_reps) {
        const JointLogits joint{logits,
                                deferral_logit(m.rejector, assemble_rejector_inputs(rho, rep))};
        sum += ea_l2d_loss(joint, ex.label, rep).total;
      }
    }
    return sum / static_cast<double>(validation.examples.size() * full_reps.size());
  };

  return run_sgd(std::move(model), query.examples.size(), cfg, batch_gradient, validation_loss);
}

TrainResult train_pop_avg(L2dModel model, const sim::Dataset& query,
                          const sim::Dataset& validation,
                          const std::vector<std::vector<int>>& query_predictions,
                          const std::vector<std::vector<int>>& validation_predictions,
                          const nn::TrainConfig& cfg) {
  check_model(model, query, Method::PopAvg);
  if (query_predictions.size() != query.examples.size() ||
      validation_predictions.size() != validation.examples.size())
    throw InvalidInput("one prediction list per query example is required");

  auto batch_gradient = [&](const L2dModel& m, std::span<const std::size_t> batch, sim::Rng&) {
    ExampleGradient total;
    total.classifier = nn::GradientBundle::zeros_like(m.classifier);
    total.rejector = nn::GradientBundle::zeros_like(m.rejector);
    for (std::size_t i : batch) {
      const auto& ex = query.examples[i];
      auto g = pop_avg_example(m, ex.features, ex.label, query_predictions[i]);
      total.loss += g.loss;
      total.classifier += g.classifier;
      total.rejector += g.rejector;
    }
    const double scale = 1.0 / static_cast<double>(batch.size());
    total.loss *= scale;
    total.classifier *= scale;
    total.rejector *= scale;
    return total;
  };

  auto validation_loss = [&](const L2dModel& m) {
    if (validation.examples.empty()) return 0.0;
    double sum = 0.0;
    for (std::size_t i = 0; i < validation.examples.size(); ++i) {
      const auto& ex = validation.examples[i];
      sum += pop_avg_loss(joint_logits(m, ex.features, nullptr), ex.label,
                          validation_predictions[i])
                 .total;
    }
    return sum / static_cast<double>(validation.examples.size());
  };

  return run_sgd(std::move(model), query.examples.size(), cfg, batch_gradient, validation_loss);
}

}  // namespace eal2d::defer
