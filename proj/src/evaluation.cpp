#include "eal2d/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include "csv.hpp"
#include "eal2d/error.hpp"

namespace eal2d::eval {

double deferral_priority(const Eigen::VectorXd& q) {
  if (q.size() < 2) throw InvalidInput("joint probabilities need K >= 1 classes plus deferral");
  const Eigen::Index K = q.size() - 1;
  return q[K] - q.head(K).maxCoeff();
}

ExpertChoice select_expert(std::span<const double> priorities) {
  if (priorities.empty()) throw InvalidInput("cannot select from an empty cohort");
  ExpertChoice best{0, priorities[0]};
  for (std::size_t i = 1; i < priorities.size(); ++i) {
    if (priorities[i] > best.priority) best = {static_cast<int>(i), priorities[i]};
  }
  return best;
}

void Curve::validate() const {
  if (points.empty()) throw InvalidInput("curve has no points");
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (!(points[i].rate >= 0.0 && points[i].rate <= 1.0))
      throw InvalidInput("curve rate outside [0,1]");
    if (!(points[i].accuracy >= 0.0 && points[i].accuracy <= 1.0))
      throw InvalidInput("curve accuracy outside [0,1]");
    if (i > 0 && !(points[i].rate > points[i - 1].rate))
      throw InvalidInput("curve rates must be strictly increasing");
  }
}

double Curve::at(double rate) const {
  if (points.empty()) throw InvalidInput("curve has no points");
  if (rate < points.front().rate || rate > points.back().rate)
    throw InvalidInput("rate outside the curve's domain");
  auto it = std::lower_bound(points.begin(), points.end(), rate,
                             [](const CurvePoint& p, double r) { return p.rate < r; });
  if (it->rate == rate) return it->accuracy;
  const auto& hi = *it;
  const auto& lo = *(it - 1);
  const double w = (rate - lo.rate) / (hi.rate - lo.rate);
  return lo.accuracy + w * (hi.accuracy - lo.accuracy);
}

CurvePair build_curves(std::span<const ScoredCase> cases) {
  if (cases.empty()) throw InvalidInput("cannot build curves from zero cases");
  const std::size_t N = cases.size();
  std::vector<std::size_t> order(N);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return cases[a].priority > cases[b].priority;
  });

  std::size_t classifier_right = 0;
  for (const auto& c : cases) classifier_right += c.classifier_correct;

  CurvePair out;
  out.system.points.reserve(N + 1);
  out.expert.points.reserve(N + 1);
  std::size_t expert_top = 0;
  std::size_t classifier_top = 0;
  const double n = static_cast<double>(N);
  for (std::size_t j = 0; j <= N; ++j) {
    if (j > 0) {
      expert_top += cases[order[j - 1]].expert_correct;
      classifier_top += cases[order[j - 1]].classifier_correct;
    }
    const double d = static_cast<double>(j) / n;
    out.system.points.push_back(
        {d, static_cast<double>(expert_top + (classifier_right - classifier_top)) / n});
    if (j > 0) out.expert.points.push_back({d, static_cast<double>(expert_top) / j});
  }
  out.expert.points.insert(out.expert.points.begin(), {0.0, out.expert.points.front().accuracy});
  return out;
}

void DeferralRange::validate() const {
  if (!(d_min >= 0.0 && d_max <= 1.0)) throw InvalidInput("deferral range must lie within [0,1]");
  if (!(d_min < d_max)) throw InvalidInput("deferral range needs d_min < d_max");
}

double area_under(const Curve& curve, double d_min, double d_max) {
  DeferralRange{d_min, d_max}.validate();
  const auto& p = curve.points;
  if (p.empty()) throw InvalidInput("curve has no points");
  if (d_min < p.front().rate || d_max > p.back().rate)
    throw InvalidInput("curve does not cover the requested range");
  double area = 0.0;
  for (std::size_t i = 0; i + 1 < p.size(); ++i) {
    const double lo = std::max(p[i].rate, d_min);
    const double hi = std::min(p[i + 1].rate, d_max);
    if (hi <= lo) continue;
    area += 0.5 * (hi - lo) * (curve.at(lo) + curve.at(hi));
  }
  return area / (d_max - d_min);
}

std::vector<MetricRow> metric_rows(const CurvePair& curves, std::span<const DeferralRange> ranges,
                                   const std::string& cohort, std::uint64_t seed) {
  std::vector<MetricRow> rows;
  for (const auto& r : ranges) {
    rows.push_back({"AURSAC", r.d_min, r.d_max, area_under(curves.system, r.d_min, r.d_max),
                    cohort, seed});
    rows.push_back({"AURDAC", r.d_min, r.d_max, area_under(curves.expert, r.d_min, r.d_max),
                    cohort, seed});
  }
  return rows;
}

void write_curves_csv(std::ostream& out, const CurvePair& curves) {
  if (curves.system.points.size() != curves.expert.points.size())
    throw InvalidInput("system and expert curves must share a grid");
  out << "deferral_rate,system_accuracy,expert_accuracy\n";
  for (std::size_t i = 0; i < curves.system.points.size(); ++i) {
    out << csv::format_double(curves.system.points[i].rate) << ','
        << csv::format_double(curves.system.points[i].accuracy) << ','
        << csv::format_double(curves.expert.points[i].accuracy) << '\n';
  }
}

void write_metrics_csv(std::ostream& out, std::span<const MetricRow> rows) {
  out << "metric,d_min,d_max,value,cohort,seed\n";
  for (const auto& r : rows) {
    out << r.metric << ',' << csv::format_double(r.d_min) << ',' << csv::format_double(r.d_max)
        << ',' << csv::format_double(r.value) << ',' << r.cohort << ',' << r.seed << '\n';
  }
}

std::vector<ScoredCase> score_cases(const defer::L2dModel& model, const sim::Dataset& test,
                                    std::span<const CohortMember> cohort, std::uint64_t seed) {
  if (cohort.empty()) throw InvalidInput("evaluation cohort is empty");
  for (const auto& m : cohort) {
    if (m.test_predictions.size() != test.examples.size())
      throw InvalidInput("expert " + std::to_string(m.expert_id) +
                         " needs one prediction per test case");
  }
  sim::Rng rng(sim::derive_seed(seed, 400));
  std::uniform_int_distribution<int> any(0, static_cast<int>(cohort.size()) - 1);

  std::vector<ScoredCase> cases;
  cases.reserve(test.examples.size());
  std::vector<double> priorities(cohort.size());
  for (std::size_t i = 0; i < test.examples.size(); ++i) {
    const auto& ex = test.examples[i];
    const Eigen::VectorXd logits = defer::class_logits(model, ex.features);
    const Eigen::VectorXd rho = nn::softmax(logits);
    Eigen::Index top = 0;
    rho.maxCoeff(&top);

    ExpertChoice choice;
    if (model.method == defer::Method::EaL2d) {
      for (std::size_t e = 0; e < cohort.size(); ++e) {
        const double g = defer::deferral_logit(
            model.rejector, defer::assemble_rejector_inputs(rho, cohort[e].rep));
        priorities[e] = deferral_priority(nn::softmax(defer::JointLogits{logits, g}.stacked()));
      }
      choice = select_expert(priorities);
    } else {
      const double g = nn::forward(model.rejector, ex.features)[0];
      const double priority =
          deferral_priority(nn::softmax(defer::JointLogits{logits, g}.stacked()));
      choice = {any(rng), priority};
    }
    cases.push_back({choice.priority, static_cast<int>(top) == ex.label,
                     cohort[choice.expert].test_predictions[i] == ex.label, choice.expert});
  }
  return cases;
}

double classifier_accuracy(const defer::L2dModel& model, const sim::Dataset& test) {
  if (test.examples.empty()) throw InvalidInput("empty test set");
  std::size_t right = 0;
  for (const auto& ex : test.examples) {
    Eigen::Index top = 0;
    defer::class_logits(model, ex.features).maxCoeff(&top);
    right += static_cast<int>(top) == ex.label;
  }
  return static_cast<double>(right) / static_cast<double>(test.examples.size());
}

}  // namespace eal2d::eval
