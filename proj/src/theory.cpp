#include "eal2d/theory.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include "eal2d/error.hpp"
#include "eal2d/expert_model.hpp"

namespace eal2d::theory {

int TrialConfig::true_class() const { return expert::argmax_lowest(theta); }

double TrialConfig::gap() const {
  const int k = true_class();
  double runner_up = -1.0;
  for (int i = 0; i < num_classes(); ++i) {
    if (i != k) runner_up = std::max(runner_up, theta[i]);
  }
  return theta[k] - runner_up;
}

void TrialConfig::validate() const {
  if (theta.empty()) throw InvalidInput("trial needs at least one class");
  for (double t : theta) {
    if (!(t >= 0.0 && t <= 1.0)) throw InvalidInput("true accuracies must lie in [0,1]");
  }
  if (samples_per_class < 0) throw InvalidInput("samples per class must be >= 0");
  if (trials < 1) throw InvalidInput("trial count must be >= 1");
}

std::vector<double> prop1_convergence_trial(double theta, std::span<const std::int64_t> schedule,
                                            sim::Rng& rng) {
  if (!(theta >= 0.0 && theta <= 1.0)) throw InvalidInput("theta must lie in [0,1]");
  std::vector<double> errors;
  for (std::int64_t n : schedule) {
    if (n < 0) throw InvalidInput("sample counts must be >= 0");
    std::binomial_distribution<std::int64_t> draw(n, theta);
    const std::int64_t t = n > 0 ? draw(rng) : 0;
    const double mu = (1.0 + static_cast<double>(t)) / (2.0 + static_cast<double>(n));
    errors.push_back(std::abs(mu - theta));
  }
  return errors;
}

namespace {

bool misidentified(const TrialConfig& cfg, int truth, std::uint64_t trial) {
  sim::Rng rng(sim::derive_seed(cfg.seed, trial));
  std::vector<double> mu(cfg.theta.size());
  const double n = static_cast<double>(cfg.samples_per_class);
  for (std::size_t k = 0; k < cfg.theta.size(); ++k) {
    std::int64_t t = 0;
    if (cfg.samples_per_class > 0) {
      std::binomial_distribution<std::int64_t> draw(cfg.samples_per_class, cfg.theta[k]);
      t = draw(rng);
    }
    mu[k] = (1.0 + static_cast<double>(t)) / (2.0 + n);
  }
  return expert::argmax_lowest(mu) != truth;
}

}  // namespace

double prop2_misidentification_rate(const TrialConfig& cfg, int threads) {
  cfg.validate();
  const int truth = cfg.true_class();
  threads = std::max(1, std::min(threads, cfg.trials));
  std::vector<long> counts(threads, 0);
  auto work = [&](int worker) {
    for (int i = worker; i < cfg.trials; i += threads)
      counts[worker] += misidentified(cfg, truth, static_cast<std::uint64_t>(i));
  };
  if (threads == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < threads; ++w) pool.emplace_back(work, w);
    for (auto& t : pool) t.join();
  }
  long total = 0;
  for (long c : counts) total += c;
  return static_cast<double>(total) / cfg.trials;
}

OracleReference bayes_optimal_reference(const sim::PartitionedDataset& task,
                                        std::span<const std::vector<double>> expert_accuracies,
                                        std::span<const std::vector<int>> expert_predictions) {
  if (!task.model) throw UnsupportedTask("Bayes reference needs a Gaussian task with known densities");
  const auto& test = task.test;
  const int K = test.num_classes;
  if (expert_accuracies.empty()) throw InvalidInput("Bayes reference needs at least one expert");
  if (expert_predictions.size() != expert_accuracies.size())
    throw InvalidInput("one prediction list per expert is required");
  for (std::size_t e = 0; e < expert_accuracies.size(); ++e) {
    if (static_cast<int>(expert_accuracies[e].size()) != K)
      throw InvalidInput("expert accuracies must cover every class");
    if (expert_predictions[e].size() != test.examples.size())
      throw InvalidInput("expert predictions must cover the test set");
  }
  if (test.examples.empty()) throw InvalidInput("empty test set");

  OracleReference out;
  std::size_t right = 0;
  for (std::size_t i = 0; i < test.examples.size(); ++i) {
    const auto& ex = test.examples[i];
    const Eigen::VectorXd post = task.model->posterior(ex.features);
    Eigen::Index h = 0;
    const double best_class = post.maxCoeff(&h);

    std::size_t best_expert = 0;
    double best_defer = -1.0;
    for (std::size_t e = 0; e < expert_accuracies.size(); ++e) {
      double p = 0.0;
      for (int y = 0; y < K; ++y) p += post[y] * expert_accuracies[e][y];
      if (p > best_defer) {
        best_defer = p;
        best_expert = e;
      }
    }
    const bool clf_right = static_cast<int>(h) == ex.label;
    right += clf_right;
    out.defers.push_back(best_defer >= best_class);
    out.cases.push_back({best_defer - best_class, clf_right,
                         expert_predictions[best_expert][i] == ex.label,
                         static_cast<int>(best_expert)});
  }
  out.classifier_accuracy = static_cast<double>(right) / static_cast<double>(test.examples.size());
  out.curves = eval::build_curves(out.cases);
  return out;
}

}  // namespace eal2d::theory
