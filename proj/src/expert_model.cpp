#include "eal2d/expert_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "csv.hpp"
#include "eal2d/error.hpp"

namespace eal2d::expert {

void BetaParams::validate() const {
  if (!(alpha > 0.0) || !(beta > 0.0) || !std::isfinite(alpha) || !std::isfinite(beta))
    throw InvalidInput("Beta parameters must be positive and finite");
}

PriorElicitation PriorElicitation::uninformative(int num_classes, double strength) {
  PriorElicitation el;
  el.accuracy.assign(num_classes, 0.5);
  el.confidence.assign(num_classes, 0.0);
  el.strength = strength;
  return el;
}

void PriorElicitation::validate() const {
  if (accuracy.size() != confidence.size())
    throw InvalidInput("prior elicitation: accuracy and confidence lengths differ");
  if (!(strength >= 2.0) || !std::isfinite(strength))
    throw InvalidInput("prior strength s must be >= 2");
  for (std::size_t k = 0; k < accuracy.size(); ++k) {
    if (!(accuracy[k] >= 0.0 && accuracy[k] <= 1.0))
      throw InvalidInput("self-assessed accuracy p must lie in [0,1]");
    if (!(confidence[k] >= 0.0 && confidence[k] <= 1.0))
      throw InvalidInput("confidence c must lie in [0,1]");
  }
}

ClassCounts count_context(std::span<const ContextExample> context, int num_classes) {
  if (num_classes < 1) throw InvalidInput("number of classes must be positive");
  ClassCounts counts{std::vector<int>(num_classes, 0), std::vector<int>(num_classes, 0)};
  for (const auto& ex : context) {
    if (ex.true_label < 0 || ex.true_label >= num_classes || ex.expert_prediction < 0 ||
        ex.expert_prediction >= num_classes)
      throw InvalidInput("context class index out of range");
    ++counts.n[ex.true_label];
    if (ex.expert_prediction == ex.true_label) ++counts.t[ex.true_label];
  }
  return counts;
}

BetaParams elicit_prior(const PriorElicitation& elicitation, int k) {
  elicitation.validate();
  if (k < 0 || k >= elicitation.num_classes()) throw InvalidInput("prior class out of range");
  const double p = elicitation.accuracy[k];
  const double c = elicitation.confidence[k];
  const double scale = elicitation.strength - 2.0;
  return {1.0 + c * p * scale, 1.0 + c * (1.0 - p) * scale};
}

std::vector<BetaParams> elicit_priors(const PriorElicitation& elicitation) {
  std::vector<BetaParams> out;
  for (int k = 0; k < elicitation.num_classes(); ++k) out.push_back(elicit_prior(elicitation, k));
  return out;
}

std::vector<BetaParams> uniform_priors(int num_classes) {
  return std::vector<BetaParams>(num_classes, BetaParams{1.0, 1.0});
}

BetaParams update_posterior(const BetaParams& prior, int n, int t) {
  prior.validate();
  if (n < 0 || t < 0 || t > n) throw InvalidInput("posterior update needs 0 <= t <= n");
  return {prior.alpha + t, prior.beta + (n - t)};
}

double posterior_mean(const BetaParams& params) {
  params.validate();
  return params.alpha / (params.alpha + params.beta);
}

int argmax_lowest(std::span<const double> values) {
  if (values.empty()) throw InvalidInput("argmax of an empty sequence");
  int best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = static_cast<int>(i);
  }
  return best;
}

BehaviouralRepresentation build_representation(std::span<const ContextExample> context,
                                               std::span<const BetaParams> priors,
                                               int num_classes) {
  if (static_cast<int>(priors.size()) != num_classes)
    throw InvalidInput("one prior per class is required");
  const ClassCounts counts = count_context(context, num_classes);
  BehaviouralRepresentation rep;
  for (int k = 0; k < num_classes; ++k) {
    rep.posterior.push_back(update_posterior(priors[k], counts.n[k], counts.t[k]));
    rep.mu.push_back(posterior_mean(rep.posterior.back()));
  }
  rep.expertise_class = argmax_lowest(rep.mu);
  return rep;
}

BehaviouralRepresentation build_representation(
    std::span<const ContextExample> context,
    const std::optional<PriorElicitation>& elicitation, int num_classes) {
  if (!elicitation) return build_representation(context, uniform_priors(num_classes), num_classes);
  if (elicitation->num_classes() != num_classes)
    throw InvalidInput("prior elicitation covers a different number of classes");
  return build_representation(context, elicit_priors(*elicitation), num_classes);
}

std::int64_t sample_complexity_bound(int num_classes, double delta, double gap) {
  if (num_classes < 1) throw InvalidInput("number of classes must be positive");
  if (!(delta > 0.0 && delta < 1.0)) throw InvalidInput("delta must lie in (0,1)");
  if (!(gap > 0.0 && gap <= 1.0)) throw InvalidInput("gap must lie in (0,1]");
  const double half = gap / 2.0;
  const double n = std::log(2.0 * num_classes / delta) / (2.0 * half * half);
  return static_cast<std::int64_t>(std::ceil(n));
}

std::map<int, PriorElicitation> read_prior_csv(std::istream& in, int num_classes) {
  if (num_classes < 1) throw InvalidInput("number of classes must be positive");
  csv::Reader reader(in);
  reader.expect_header({"expert_id", "class", "p", "c", "s"});

  struct Partial {
    PriorElicitation el;
    std::vector<bool> seen;
  };
  std::map<int, Partial> partial;
  std::vector<std::string> row;
  while (reader.next(row)) {
    const std::size_t line = reader.line();
    if (row.size() != 5) throw ParseError("prior file: expected 5 fields", line);
    const int id = csv::parse_int(row[0], line);
    const int k = csv::parse_int(row[1], line);
    const double p = csv::parse_double(row[2], line);
    const double c = csv::parse_double(row[3], line);
    const double s = csv::parse_double(row[4], line);
    if (k < 0 || k >= num_classes) throw ParseError("prior file: class out of range", line);
    if (!(p >= 0.0 && p <= 1.0)) throw ParseError("prior file: p outside [0,1]", line);
    if (!(c >= 0.0 && c <= 1.0)) throw ParseError("prior file: c outside [0,1]", line);
    if (!(s >= 2.0)) throw ParseError("prior file: s must be >= 2", line);

    auto [it, fresh] = partial.try_emplace(id);
    auto& entry = it->second;
    if (fresh) {
      entry.el = PriorElicitation::uninformative(num_classes, s);
      entry.seen.assign(num_classes, false);
    } else if (entry.el.strength != s) {
      throw ParseError("prior file: inconsistent s for expert " + std::to_string(id), line);
    }
    if (entry.seen[k])
      throw ParseError("prior file: duplicate entry for expert " + std::to_string(id) +
                           " class " + std::to_string(k),
                       line);
    entry.seen[k] = true;
    entry.el.accuracy[k] = p;
    entry.el.confidence[k] = c;
  }

  std::map<int, PriorElicitation> out;
  for (auto& [id, entry] : partial) {
    for (int k = 0; k < num_classes; ++k) {
      if (!entry.seen[k])
        throw InvalidInput("prior file: expert " + std::to_string(id) + " is missing class " +
                           std::to_string(k));
    }
    out.emplace(id, std::move(entry.el));
  }
  return out;
}

std::map<int, PriorElicitation> load_prior_file(const std::string& path, int num_classes) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open prior file " + path);
  return read_prior_csv(in, num_classes);
}

void write_prior_csv(std::ostream& out, const std::map<int, PriorElicitation>& priors) {
  out << "expert_id,class,p,c,s\n";
  for (const auto& [id, el] : priors) {
    for (int k = 0; k < el.num_classes(); ++k) {
      out << id << ',' << k << ',' << csv::format_double(el.accuracy[k]) << ','
          << csv::format_double(el.confidence[k]) << ',' << csv::format_double(el.strength)
          << '\n';
    }
  }
}

}  // namespace eal2d::expert
