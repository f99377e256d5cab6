#include "eal2d/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include "csv.hpp"
#include "eal2d/error.hpp"

namespace eal2d::sim {

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Eigen::VectorXd GaussianModel::posterior(const Eigen::VectorXd& x) const {
  Eigen::VectorXd logp(class_means.size());
  const double inv = 1.0 / (2.0 * noise_scale * noise_scale);
  for (std::size_t k = 0; k < class_means.size(); ++k)
    logp[static_cast<Eigen::Index>(k)] = -(x - class_means[k]).squaredNorm() * inv;
  const double m = logp.maxCoeff();
  Eigen::VectorXd p = (logp.array() - m).exp().matrix();
  return p / p.sum();
}

void SyntheticTaskSpec::validate() const {
  if (num_classes < 2) throw InvalidInput("synthetic task needs K >= 2");
  if (feature_dim < 1) throw InvalidInput("synthetic task needs dim >= 1");
  if (!(separation >= 0.0)) throw InvalidInput("separation must be >= 0");
  if (!(noise_scale > 0.0)) throw InvalidInput("noise_scale must be > 0");
  if (train_size < 0 || validation_size < 0 || test_size < 0 || context_pool_size < 0)
    throw InvalidInput("partition sizes must be >= 0");
}

namespace {

Dataset sample_partition(const GaussianModel& model, int dim, int size, Rng& rng) {
  const int K = static_cast<int>(model.class_means.size());
  std::vector<int> labels(size);
  for (int i = 0; i < size; ++i) labels[i] = i % K;
  std::shuffle(labels.begin(), labels.end(), rng);

  std::normal_distribution<double> normal(0.0, 1.0);
  Dataset out{K, dim, {}};
  out.examples.reserve(size);
  for (int y : labels) {
    Eigen::VectorXd x(dim);
    for (int d = 0; d < dim; ++d) x[d] = model.class_means[y][d] + model.noise_scale * normal(rng);
    out.examples.push_back({std::move(x), y});
  }
  return out;
}

}  // namespace

PartitionedDataset generate_gaussian_task(const SyntheticTaskSpec& spec) {
  spec.validate();
  GaussianModel model;
  model.noise_scale = spec.noise_scale;
  Rng rng(derive_seed(spec.seed, 0));
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int k = 0; k < spec.num_classes; ++k) {
    Eigen::VectorXd dir(spec.feature_dim);
    double norm = 0.0;
    while (norm < 1e-12) {
      for (int d = 0; d < spec.feature_dim; ++d) dir[d] = normal(rng);
      norm = dir.norm();
    }
    model.class_means.push_back(spec.separation * dir / norm);
  }

  PartitionedDataset out;
  Rng train_rng(derive_seed(spec.seed, 1));
  Rng val_rng(derive_seed(spec.seed, 2));
  Rng test_rng(derive_seed(spec.seed, 3));
  Rng pool_rng(derive_seed(spec.seed, 4));
  out.train = sample_partition(model, spec.feature_dim, spec.train_size, train_rng);
  out.validation = sample_partition(model, spec.feature_dim, spec.validation_size, val_rng);
  out.test = sample_partition(model, spec.feature_dim, spec.test_size, test_rng);
  out.context_pool = sample_partition(model, spec.feature_dim, spec.context_pool_size, pool_rng);
  out.model = std::move(model);
  return out;
}

LoadedDataset read_csv_dataset(std::istream& in) {
  csv::Reader reader(in);
  const auto header = reader.header();
  if (header.size() < 2 || header[0] != "y")
    throw ParseError("dataset header must be \"y,f0,f1,...\"", reader.line());
  for (std::size_t i = 1; i < header.size(); ++i) {
    if (header[i] != "f" + std::to_string(i - 1))
      throw ParseError("dataset header column " + std::to_string(i) + " must be f" +
                           std::to_string(i - 1),
                       reader.line());
  }
  const int dim = static_cast<int>(header.size()) - 1;

  LoadedDataset out;
  out.data.feature_dim = dim;
  std::vector<std::string> row;
  int max_label = -1;
  while (reader.next(row)) {
    const std::size_t line = reader.line();
    if (row.size() != header.size())
      throw ParseError("ragged row: expected " + std::to_string(header.size()) + " fields, got " +
                           std::to_string(row.size()),
                       line);
    const int y = csv::parse_int(row[0], line);
    if (y < 0) throw ParseError("negative label", line);
    Eigen::VectorXd x(dim);
    for (int d = 0; d < dim; ++d) {
      x[d] = csv::parse_double(row[d + 1], line);
      if (!std::isfinite(x[d])) throw ParseError("non-finite feature", line);
    }
    max_label = std::max(max_label, y);
    out.data.examples.push_back({std::move(x), y});
  }
  if (out.data.examples.empty()) throw ParseError("no rows: dataset has a header but no examples");
  out.data.num_classes = max_label + 1;

  std::vector<int> per_class(out.data.num_classes, 0);
  for (const auto& ex : out.data.examples) ++per_class[ex.label];
  for (int k = 0; k < out.data.num_classes; ++k) {
    if (per_class[k] == 0) out.warnings.push_back("class " + std::to_string(k) + " has no examples");
  }
  return out;
}

LoadedDataset load_csv_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open dataset " + path);
  return read_csv_dataset(in);
}

void write_csv_dataset(std::ostream& out, const Dataset& data) {
  out << 'y';
  for (int d = 0; d < data.feature_dim; ++d) out << ",f" << d;
  out << '\n';
  for (const auto& ex : data.examples) {
    out << ex.label;
    for (int d = 0; d < data.feature_dim; ++d) out << ',' << csv::format_double(ex.features[d]);
    out << '\n';
  }
}

bool SimulatedExpertSpec::is_expert_in(int label) const {
  return std::binary_search(expertise_classes.begin(), expertise_classes.end(), label);
}

double SimulatedExpertSpec::true_accuracy(int label, int num_classes) const {
  if (is_expert_in(label)) return 1.0;
  return overlap_probability + (1.0 - overlap_probability) / num_classes;
}

std::vector<double> SimulatedExpertSpec::true_accuracies(int num_classes) const {
  std::vector<double> out;
  for (int k = 0; k < num_classes; ++k) out.push_back(true_accuracy(k, num_classes));
  return out;
}

std::vector<SimulatedExpertSpec> make_population(int num_classes, int id_count, int ood_count,
                                                 double overlap_probability,
                                                 int expertise_per_expert, int context_size,
                                                 std::uint64_t seed) {
  if (num_classes < 2) throw InvalidInput("population needs K >= 2");
  if (id_count < 0 || ood_count < 0 || id_count + ood_count < 1)
    throw InvalidInput("population needs at least one expert");
  if (!(overlap_probability >= 0.0 && overlap_probability <= 1.0))
    throw InvalidInput("overlap_probability must lie in [0,1]");
  if (expertise_per_expert < 1 || expertise_per_expert > num_classes)
    throw InvalidInput("expertise_per_expert must lie in [1, K]");
  if (expertise_per_expert == 1 && id_count + ood_count > num_classes)
    throw InvalidInput("more single-expertise experts than classes");
  if (context_size < 0) throw InvalidInput("context_size must be >= 0");

  Rng rng(derive_seed(seed, 100));
  std::vector<int> classes(num_classes);
  std::iota(classes.begin(), classes.end(), 0);

  std::vector<SimulatedExpertSpec> population;
  const int total = id_count + ood_count;
  if (expertise_per_expert == 1) std::shuffle(classes.begin(), classes.end(), rng);
  for (int e = 0; e < total; ++e) {
    SimulatedExpertSpec spec;
    spec.expert_id = e;
    spec.overlap_probability = overlap_probability;
    spec.context_size = context_size;
    spec.in_distribution = e < id_count;
    if (expertise_per_expert == 1) {
      spec.expertise_classes = {classes[e]};
    } else {
      std::vector<int> pick = classes;
      std::shuffle(pick.begin(), pick.end(), rng);
      spec.expertise_classes.assign(pick.begin(), pick.begin() + expertise_per_expert);
      std::sort(spec.expertise_classes.begin(), spec.expertise_classes.end());
    }
    population.push_back(std::move(spec));
  }
  return population;
}

int expert_predict(const SimulatedExpertSpec& expert, int true_label, int num_classes, Rng& rng) {
  if (true_label < 0 || true_label >= num_classes) throw InvalidInput("label out of range");
  if (expert.is_expert_in(true_label)) return true_label;
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  if (coin(rng) < expert.overlap_probability) return true_label;
  std::uniform_int_distribution<int> any(0, num_classes - 1);
  return any(rng);
}

std::vector<ContextRecord> draw_context_set(const SimulatedExpertSpec& expert,
                                            const Dataset& context_pool, Rng& rng) {
  const int K = context_pool.num_classes;
  if (K < 1) throw InvalidInput("context pool has no classes");
  const int N = expert.context_size;
  if (N < 0) throw InvalidInput("context size must be >= 0");
  if (N == 0) return {};

  std::vector<std::vector<std::size_t>> by_class(K);
  for (std::size_t i = 0; i < context_pool.examples.size(); ++i)
    by_class[context_pool.examples[i].label].push_back(i);

  // Classes receiving the extra example when K does not divide N.
  std::vector<int> order(K);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<int> quota(K, N / K);
  for (int r = 0; r < N % K; ++r) ++quota[order[r]];

  for (int k = 0; k < K; ++k) {
    if (static_cast<int>(by_class[k].size()) < quota[k])
      throw InvalidInput("context pool has " + std::to_string(by_class[k].size()) +
                         " examples of class " + std::to_string(k) + ", need " +
                         std::to_string(quota[k]));
  }

  std::vector<ContextRecord> out;
  out.reserve(N);
  for (int k = 0; k < K; ++k) {
    auto& idx = by_class[k];
    // Partial Fisher-Yates: the first quota[k] entries are a uniform sample.
    for (int j = 0; j < quota[k]; ++j) {
      std::uniform_int_distribution<std::size_t> pick(j, idx.size() - 1);
      std::swap(idx[j], idx[pick(rng)]);
      const auto& ex = context_pool.examples[idx[j]];
      out.push_back({ex, expert_predict(expert, ex.label, K, rng)});
    }
  }
  return out;
}

std::vector<expert::ContextExample> to_context_examples(std::span<const ContextRecord> records) {
  std::vector<expert::ContextExample> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back({r.example.label, r.prediction});
  return out;
}

}  // namespace eal2d::sim
