#include "eal2d/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include <json.hpp>

#include "eal2d/error.hpp"

namespace eal2d::harness {

namespace {

using json = nlohmann::json;

[[noreturn]] void fail(const std::string& key, const std::string& why) {
  throw InvalidInput("config key \"" + key + "\": " + why);
}

double number(const json& v, const std::string& key) {
  if (!v.is_number()) fail(key, "expected a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) fail(key, "expected a finite number");
  return d;
}

long long integer(const json& v, const std::string& key) {
  if (!v.is_number_integer() && !v.is_number_unsigned()) fail(key, "expected an integer");
  return v.get<long long>();
}

std::string string(const json& v, const std::string& key) {
  if (!v.is_string()) fail(key, "expected a string");
  return v.get<std::string>();
}

// Accepts a scalar or a nonempty array of scalars.
template <typename T, typename F>
std::vector<T> scalar_or_list(const json& v, const std::string& key, F&& convert) {
  std::vector<T> out;
  if (v.is_array()) {
    if (v.empty()) fail(key, "expected a nonempty list");
    for (const auto& e : v) out.push_back(convert(e, key));
  } else {
    out.push_back(convert(v, key));
  }
  return out;
}

std::vector<int> int_list(const json& v, const std::string& key, bool allow_empty) {
  if (!v.is_array()) fail(key, "expected a list of integers");
  if (v.empty() && !allow_empty) fail(key, "expected a nonempty list");
  std::vector<int> out;
  for (const auto& e : v) {
    const long long x = integer(e, key);
    if (x < 1 || x > 1 << 16) fail(key, "entries must be positive widths");
    out.push_back(static_cast<int>(x));
  }
  return out;
}

int positive_int(const json& v, const std::string& key, long long min = 1) {
  const long long x = integer(v, key);
  if (x < min) fail(key, "must be >= " + std::to_string(min));
  if (x > (1LL << 30)) fail(key, "is implausibly large");
  return static_cast<int>(x);
}

void validate(const ExperimentConfig& c) {
  try {
    c.task.validate();
  } catch (const InvalidInput& e) {
    throw InvalidInput(std::string("config: ") + e.what());
  }
  for (double p : c.overlap_grid) {
    if (!(p >= 0.0 && p <= 1.0)) fail("overlap_probability", "must lie in [0,1]");
  }
  for (int e : c.expertise_grid) {
    if (e < 1 || e > c.task.num_classes) fail("expertise_per_expert", "must lie in [1, num_classes]");
    if (e == 1 && c.id_experts + c.ood_experts > c.task.num_classes)
      fail("id_experts", "id_experts + ood_experts exceeds num_classes for single-expertise experts");
  }
  if (c.id_experts < 1) fail("id_experts", "at least one in-distribution expert is required");
  if (c.context_size < 0) fail("context_size", "must be >= 0");
  if (c.context_subsample && *c.context_subsample > c.context_size)
    fail("context_subsample", "must not exceed context_size");
  if (c.seeds.empty()) fail("seeds", "at least one seed is required");
  if (c.priors.target_class < 0 || c.priors.target_class >= c.task.num_classes)
    fail("priors_target_class", "must lie in [0, num_classes)");
  const int misdirected = misdirected_class(c);
  if (misdirected < 0 || misdirected >= c.task.num_classes)
    fail("priors_misdirected_class", "must lie in [0, num_classes)");
  if (misdirected == c.priors.target_class)
    fail("priors_misdirected_class", "must differ from priors_target_class");
  if (!(c.priors.target_overlap >= 0.0 && c.priors.target_overlap <= 1.0))
    fail("priors_target_overlap", "must lie in [0,1]");
  if (!(c.priors.elicited_accuracy >= 0.0 && c.priors.elicited_accuracy <= 1.0))
    fail("priors_elicited_accuracy", "must lie in [0,1]");
  if (!(c.priors.elicited_confidence >= 0.0 && c.priors.elicited_confidence <= 1.0))
    fail("priors_elicited_confidence", "must lie in [0,1]");
  if (!(c.priors.strength >= 2.0)) fail("priors_strength", "must be >= 2");
  if (!c.priors.prior_files.empty() && c.priors.prior_files.size() != 3)
    fail("priors_prior_files", "expected exactly three files (one per arm)");
}

}  // namespace

int misdirected_class(const ExperimentConfig& cfg) {
  if (cfg.priors.misdirected_class) return *cfg.priors.misdirected_class;
  const int k = cfg.task.num_classes;
  return (cfg.priors.target_class + k / 2 + 1) % k;
}

ParsedConfig parse_config_text(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw InvalidInput(std::string("config is not valid JSON: ") + e.what());
  }
  if (!root.is_object()) throw InvalidInput("config must be a JSON object");

  ParsedConfig parsed;
  ExperimentConfig& c = parsed.config;

  using Setter = std::function<void(const json&, const std::string&)>;
  const std::map<std::string, Setter> setters{
      {"num_classes", [&](const json& v, const std::string& k) { c.task.num_classes = positive_int(v, k, 2); }},
      {"feature_dim", [&](const json& v, const std::string& k) { c.task.feature_dim = positive_int(v, k); }},
      {"separation", [&](const json& v, const std::string& k) {
         c.task.separation = number(v, k);
         if (c.task.separation < 0.0) fail(k, "must be >= 0");
       }},
      {"noise_scale", [&](const json& v, const std::string& k) {
         c.task.noise_scale = number(v, k);
         if (!(c.task.noise_scale > 0.0)) fail(k, "must be > 0");
       }},
      {"train_size", [&](const json& v, const std::string& k) { c.task.train_size = positive_int(v, k); }},
      {"validation_size", [&](const json& v, const std::string& k) { c.task.validation_size = positive_int(v, k, 0); }},
      {"test_size", [&](const json& v, const std::string& k) { c.task.test_size = positive_int(v, k); }},
      {"context_pool_size", [&](const json& v, const std::string& k) { c.task.context_pool_size = positive_int(v, k, 0); }},
      {"id_experts", [&](const json& v, const std::string& k) { c.id_experts = positive_int(v, k); }},
      {"ood_experts", [&](const json& v, const std::string& k) { c.ood_experts = positive_int(v, k, 0); }},
      {"overlap_probability", [&](const json& v, const std::string& k) {
         c.overlap_grid = scalar_or_list<double>(v, k, number);
       }},
      {"expertise_per_expert", [&](const json& v, const std::string& k) {
         c.expertise_grid = scalar_or_list<int>(v, k, [](const json& e, const std::string& key) {
           return positive_int(e, key);
         });
       }},
      {"context_size", [&](const json& v, const std::string& k) { c.context_size = positive_int(v, k, 0); }},
      {"method", [&](const json& v, const std::string& k) {
         const auto names = scalar_or_list<std::string>(v, k, string);
         c.methods.clear();
         for (const auto& n : names) {
           defer::Method m;
           try {
             m = defer::parse_method(n);
           } catch (const InvalidInput& e) {
             fail(k, e.what());
           }
           if (std::find(c.methods.begin(), c.methods.end(), m) == c.methods.end()) c.methods.push_back(m);
         }
       }},
      {"prior_file", [&](const json& v, const std::string& k) {
         if (!v.is_null()) c.prior_file = string(v, k);
       }},
      {"prior_strength", [&](const json& v, const std::string& k) {
         c.prior_strength = number(v, k);
         if (!(c.prior_strength >= 2.0)) fail(k, "must be >= 2");
       }},
      {"learning_rate", [&](const json& v, const std::string& k) {
         c.train.learning_rate = number(v, k);
         if (!(c.train.learning_rate > 0.0)) fail(k, "must be > 0");
       }},
      {"batch_size", [&](const json& v, const std::string& k) { c.train.batch_size = positive_int(v, k); }},
      {"epochs", [&](const json& v, const std::string& k) { c.train.epochs = positive_int(v, k, 0); }},
      {"weight_decay", [&](const json& v, const std::string& k) {
         c.train.weight_decay = number(v, k);
         if (c.train.weight_decay < 0.0) fail(k, "must be >= 0");
       }},
      {"patience", [&](const json& v, const std::string& k) { c.train.patience = positive_int(v, k, 0); }},
      {"classifier_hidden", [&](const json& v, const std::string& k) { c.architecture.classifier_hidden = int_list(v, k, true); }},
      {"rejector_hidden", [&](const json& v, const std::string& k) { c.architecture.rejector_hidden = int_list(v, k, true); }},
      {"context_subsample", [&](const json& v, const std::string& k) {
         if (v.is_null()) {
           c.context_subsample.reset();
         } else {
           c.context_subsample = positive_int(v, k, 0);
         }
       }},
      {"ranges", [&](const json& v, const std::string& k) {
         if (!v.is_array() || v.empty()) fail(k, "expected a nonempty list of [d_min, d_max] pairs");
         c.ranges.clear();
         for (const auto& r : v) {
           if (!r.is_array() || r.size() != 2) fail(k, "each range must be a [d_min, d_max] pair");
           eval::DeferralRange range{number(r[0], k), number(r[1], k)};
           try {
             range.validate();
           } catch (const InvalidInput& e) {
             fail(k, e.what());
           }
           c.ranges.push_back(range);
         }
       }},
      {"seeds", [&](const json& v, const std::string& k) {
         if (!v.is_array()) fail(k, "expected a list of integers");
         c.seeds.clear();
         for (const auto& s : v) {
           if (!s.is_number_unsigned() && !(s.is_number_integer() && s.get<long long>() >= 0))
             fail(k, "seeds must be nonnegative integers");
           const auto seed = s.get<std::uint64_t>();
           if (std::find(c.seeds.begin(), c.seeds.end(), seed) != c.seeds.end()) {
             parsed.warnings.push_back("duplicate seed " + std::to_string(seed) + " ignored");
             continue;
           }
           c.seeds.push_back(seed);
         }
       }},
      {"priors_target_class", [&](const json& v, const std::string& k) { c.priors.target_class = positive_int(v, k, 0); }},
      {"priors_misdirected_class", [&](const json& v, const std::string& k) {
         if (v.is_null()) {
           c.priors.misdirected_class.reset();
         } else {
           c.priors.misdirected_class = positive_int(v, k, 0);
         }
       }},
      {"priors_target_overlap", [&](const json& v, const std::string& k) { c.priors.target_overlap = number(v, k); }},
      {"priors_elicited_accuracy", [&](const json& v, const std::string& k) { c.priors.elicited_accuracy = number(v, k); }},
      {"priors_elicited_confidence", [&](const json& v, const std::string& k) { c.priors.elicited_confidence = number(v, k); }},
      {"priors_strength", [&](const json& v, const std::string& k) { c.priors.strength = number(v, k); }},
      {"priors_prior_files", [&](const json& v, const std::string& k) {
         if (!v.is_array()) fail(k, "expected a list of paths");
         c.priors.prior_files.clear();
         for (const auto& p : v) c.priors.prior_files.push_back(string(p, k));
       }},
  };

  for (const auto& [key, value] : root.items()) {
    const auto it = setters.find(key);
    if (it == setters.end()) throw InvalidInput("config: unknown key \"" + key + "\"");
    it->second(value, key);
  }
  validate(c);
  return parsed;
}

ParsedConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open config file " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

std::string config_to_json(const ExperimentConfig& c) {
  json j;
  j["num_classes"] = c.task.num_classes;
  j["feature_dim"] = c.task.feature_dim;
  j["separation"] = c.task.separation;
  j["noise_scale"] = c.task.noise_scale;
  j["train_size"] = c.task.train_size;
  j["validation_size"] = c.task.validation_size;
  j["test_size"] = c.task.test_size;
  j["context_pool_size"] = c.task.context_pool_size;
  j["id_experts"] = c.id_experts;
  j["ood_experts"] = c.ood_experts;
  j["overlap_probability"] = c.overlap_grid;
  j["expertise_per_expert"] = c.expertise_grid;
  j["context_size"] = c.context_size;
  json methods = json::array();
  for (auto m : c.methods) methods.push_back(defer::to_string(m));
  j["method"] = methods;
  j["prior_file"] = c.prior_file ? json(*c.prior_file) : json(nullptr);
  j["prior_strength"] = c.prior_strength;
  j["learning_rate"] = c.train.learning_rate;
  j["batch_size"] = c.train.batch_size;
  j["epochs"] = c.train.epochs;
  j["weight_decay"] = c.train.weight_decay;
  j["patience"] = c.train.patience;
  j["classifier_hidden"] = c.architecture.classifier_hidden;
  j["rejector_hidden"] = c.architecture.rejector_hidden;
  j["context_subsample"] = c.context_subsample ? json(*c.context_subsample) : json(nullptr);
  json ranges = json::array();
  for (const auto& r : c.ranges) ranges.push_back({r.d_min, r.d_max});
  j["ranges"] = ranges;
  j["seeds"] = c.seeds;
  j["priors_target_class"] = c.priors.target_class;
  j["priors_misdirected_class"] =
      c.priors.misdirected_class ? json(*c.priors.misdirected_class) : json(nullptr);
  j["priors_target_overlap"] = c.priors.target_overlap;
  j["priors_elicited_accuracy"] = c.priors.elicited_accuracy;
  j["priors_elicited_confidence"] = c.priors.elicited_confidence;
  j["priors_strength"] = c.priors.strength;
  j["priors_prior_files"] = c.priors.prior_files;
  return j.dump(2);
}

}  // namespace eal2d::harness
