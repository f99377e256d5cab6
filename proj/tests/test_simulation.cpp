#include <doctest.h>

#include <numeric>
#include <set>
#include <sstream>

#include "eal2d/deferral.hpp"
#include "eal2d/error.hpp"
#include "eal2d/evaluation.hpp"
#include "eal2d/simulation.hpp"

using namespace eal2d;
using namespace eal2d::sim;

namespace {

SyntheticTaskSpec small_spec(double separation, std::uint64_t seed = 3) {
  SyntheticTaskSpec s;
  s.num_classes = 4;
  s.feature_dim = 5;
  s.separation = separation;
  s.train_size = 1200;
  s.validation_size = 200;
  s.test_size = 2000;
  s.context_pool_size = 400;
  s.seed = seed;
  return s;
}

double trained_accuracy(const PartitionedDataset& task) {
  auto model = defer::make_model(defer::Method::PopAvg, task.train.feature_dim, task.train.num_classes,
                                 {}, 1);
  // Oracle experts so the deferral term is always on; the classifier head
  // is still trained by the cross-entropy term.
  std::vector<std::vector<int>> q, v;
  for (const auto& ex : task.train.examples) q.push_back({ex.label});
  for (const auto& ex : task.validation.examples) v.push_back({ex.label});
  nn::TrainConfig cfg;
  cfg.epochs = 15;
  const auto trained = defer::train_pop_avg(model, task.train, task.validation, q, v, cfg);
  return eval::classifier_accuracy(trained.model, task.test);
}

}  // namespace

TEST_CASE("derive_seed gives distinct streams") {
  std::set<std::uint64_t> seen;
  for (std::uint64_t s = 0; s < 50; ++s) {
    for (std::uint64_t k = 0; k < 50; ++k) seen.insert(derive_seed(s, k));
  }
  CHECK(seen.size() == 2500);
  CHECK(derive_seed(7, 3) == derive_seed(7, 3));
}

TEST_CASE("gaussian task layout") {
  const auto task = generate_gaussian_task(small_spec(2.0));
  CHECK(task.train.size() == 1200);
  CHECK(task.test.size() == 2000);
  CHECK(task.context_pool.size() == 400);
  REQUIRE(task.model);
  for (const auto& mean : task.model->class_means) CHECK(mean.norm() == doctest::Approx(2.0));
  for (const auto* part : {&task.train, &task.validation, &task.test, &task.context_pool}) {
    std::vector<int> per(4, 0);
    for (const auto& ex : part->examples) ++per[static_cast<std::size_t>(ex.label)];
    CHECK(*std::max_element(per.begin(), per.end()) - *std::min_element(per.begin(), per.end()) <= 1);
  }
}

TEST_CASE("same seed gives bit-identical data, another seed does not") {
  const auto a = generate_gaussian_task(small_spec(2.0, 9));
  const auto b = generate_gaussian_task(small_spec(2.0, 9));
  const auto c = generate_gaussian_task(small_spec(2.0, 10));
  std::ostringstream sa, sb, sc;
  write_csv_dataset(sa, a.train);
  write_csv_dataset(sb, b.train);
  write_csv_dataset(sc, c.train);
  CHECK(sa.str() == sb.str());
  CHECK(sa.str() != sc.str());
}

TEST_CASE("partitions are disjoint") {
  const auto task = generate_gaussian_task(small_spec(1.0));
  std::set<std::vector<double>> train;
  for (const auto& ex : task.train.examples)
    train.insert({ex.features.data(), ex.features.data() + ex.features.size()});
  for (const auto* part : {&task.validation, &task.test, &task.context_pool}) {
    for (const auto& ex : part->examples)
      CHECK(train.count({ex.features.data(), ex.features.data() + ex.features.size()}) == 0);
  }
}

TEST_CASE("task spec validation") {
  auto s = small_spec(1.0);
  s.feature_dim = 0;
  CHECK_THROWS_AS(generate_gaussian_task(s), InvalidInput);
  s = small_spec(1.0);
  s.num_classes = 1;
  CHECK_THROWS_AS(generate_gaussian_task(s), InvalidInput);
}

TEST_CASE("gaussian posterior is a distribution and favours the nearest mean") {
  const auto task = generate_gaussian_task(small_spec(3.0));
  for (int k = 0; k < 4; ++k) {
    const auto p = task.model->posterior(task.model->class_means[static_cast<std::size_t>(k)]);
    CHECK(p.sum() == doctest::Approx(1.0));
    Eigen::Index top;
    p.maxCoeff(&top);
    CHECK(top == k);
  }
}

TEST_CASE("indistinguishable classes give chance accuracy") {
  const auto task = generate_gaussian_task(small_spec(0.0));
  const double acc = trained_accuracy(task);
  const double sigma = std::sqrt(0.25 * 0.75 / 2000);
  CHECK(std::abs(acc - 0.25) <= 3 * sigma);
}

TEST_CASE("well separated classes are learned almost perfectly") {
  const auto task = generate_gaussian_task(small_spec(20.0));
  CHECK(trained_accuracy(task) > 0.99);
}

TEST_CASE("dataset csv") {
  SUBCASE("two rows") {
    std::istringstream in("y,f0,f1\n0,1.5,2\n1,-3,4e-2\n");
    const auto d = read_csv_dataset(in);
    CHECK(d.data.size() == 2);
    CHECK(d.data.num_classes == 2);
    CHECK(d.data.examples[1].features(1) == 0.04);
    CHECK(d.warnings.empty());
  }
  SUBCASE("label gap is a warning") {
    std::istringstream in("y,f0\n0,1\n2,1\n");
    const auto d = read_csv_dataset(in);
    CHECK(d.data.num_classes == 3);
    REQUIRE(d.warnings.size() == 1);
    CHECK(d.warnings[0].find('1') != std::string::npos);
  }
  SUBCASE("empty file") {
    std::istringstream in("");
    try {
      read_csv_dataset(in);
      FAIL("expected an error");
    } catch (const ParseError& e) {
      CHECK(std::string(e.what()).find("no rows") != std::string::npos);
    }
  }
  SUBCASE("errors name the line") {
    for (const char* text : {"y,f0,f1\n0,1,2\n1,2\n", "y,f0\n0,1\n-1,2\n", "y,f0\n0,1\n1,abc\n"}) {
      std::istringstream in(text);
      try {
        read_csv_dataset(in);
        FAIL("expected a parse error");
      } catch (const ParseError& e) {
        CHECK(e.line() == 3);
      }
    }
  }
  SUBCASE("write then read is exact") {
    const auto task = generate_gaussian_task(small_spec(1.3));
    std::stringstream buf;
    write_csv_dataset(buf, task.validation);
    const auto back = read_csv_dataset(buf).data;
    REQUIRE(back.size() == task.validation.size());
    for (std::size_t i = 0; i < back.size(); ++i) {
      CHECK(back.examples[i].label == task.validation.examples[i].label);
      CHECK(back.examples[i].features == task.validation.examples[i].features);
    }
  }
}

TEST_CASE("make_population") {
  SUBCASE("five ID and five OOD single-expertise experts cover every class") {
    const auto pop = make_population(10, 5, 5, 0.2, 1, 150, 4);
    REQUIRE(pop.size() == 10);
    std::set<int> classes;
    for (std::size_t i = 0; i < pop.size(); ++i) {
      CHECK(pop[i].expertise_classes.size() == 1);
      CHECK(pop[i].in_distribution == (i < 5));
      CHECK(pop[i].expert_id == static_cast<int>(i));
      classes.insert(pop[i].expertise_classes[0]);
    }
    CHECK(classes.size() == 10);
  }
  SUBCASE("multi-expertise experts hold distinct classes") {
    const auto pop = make_population(10, 1, 1, 0.2, 3, 0, 4);
    for (const auto& e : pop) {
      CHECK(std::set<int>(e.expertise_classes.begin(), e.expertise_classes.end()).size() == 3);
      CHECK(std::is_sorted(e.expertise_classes.begin(), e.expertise_classes.end()));
    }
  }
  SUBCASE("seeded") {
    const auto a = make_population(10, 3, 2, 0.5, 2, 10, 8);
    const auto b = make_population(10, 3, 2, 0.5, 2, 10, 8);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].expertise_classes == b[i].expertise_classes);
  }
  SUBCASE("infeasible") {
    CHECK_THROWS_AS(make_population(4, 3, 2, 0.2, 1, 0, 1), InvalidInput);
    CHECK_THROWS_AS(make_population(4, 1, 1, 1.5, 1, 0, 1), InvalidInput);
    CHECK_THROWS_AS(make_population(4, 1, 1, 0.2, 5, 0, 1), InvalidInput);
  }
}

TEST_CASE("expert_predict") {
  Rng rng(30);
  const SimulatedExpertSpec specialist{0, {2}, 0.0, 0, true};
  for (int i = 0; i < 1000; ++i) CHECK(expert_predict(specialist, 2, 10, rng) == 2);
  const SimulatedExpertSpec perfect{0, {2}, 1.0, 0, true};
  for (int i = 0; i < 1000; ++i) CHECK(expert_predict(perfect, 5, 10, rng) == 5);

  for (double p : {0.0, 0.2, 0.5}) {
    const SimulatedExpertSpec e{0, {0}, p, 0, true};
    const int draws = 100000;
    int correct = 0;
    for (int i = 0; i < draws; ++i) correct += expert_predict(e, 7, 10, rng) == 7;
    const double expect = p + (1 - p) / 10;
    CHECK(e.true_accuracy(7, 10) == doctest::Approx(expect));
    CHECK(std::abs(static_cast<double>(correct) / draws - expect) <=
          3 * std::sqrt(expect * (1 - expect) / draws));
  }
}

TEST_CASE("draw_context_set") {
  SyntheticTaskSpec s;
  s.num_classes = 10;
  s.feature_dim = 3;
  s.train_size = 10;
  s.validation_size = 0;
  s.test_size = 10;
  s.context_pool_size = 500;
  const auto task = generate_gaussian_task(s);

  SUBCASE("150 predictions, 15 per class") {
    SimulatedExpertSpec e{0, {4}, 0.2, 150, true};
    Rng rng(1);
    const auto ctx = draw_context_set(e, task.context_pool, rng);
    CHECK(ctx.size() == 150);
    const auto counts = expert::count_context(to_context_examples(ctx), 10);
    for (int n : counts.n) CHECK(n == 15);
    CHECK(counts.t[4] == counts.n[4]);
  }
  SUBCASE("uneven sizes differ by at most one") {
    SimulatedExpertSpec e{0, {4}, 0.2, 37, true};
    Rng rng(2);
    const auto counts = expert::count_context(to_context_examples(draw_context_set(e, task.context_pool, rng)), 10);
    CHECK(*std::max_element(counts.n.begin(), counts.n.end()) - *std::min_element(counts.n.begin(), counts.n.end()) <= 1);
    CHECK(std::accumulate(counts.n.begin(), counts.n.end(), 0) == 37);
  }
  SUBCASE("drawn without replacement") {
    SimulatedExpertSpec e{0, {4}, 0.2, 500, true};
    Rng rng(3);
    const auto ctx = draw_context_set(e, task.context_pool, rng);
    std::set<std::vector<double>> seen;
    for (const auto& r : ctx)
      seen.insert({r.example.features.data(), r.example.features.data() + r.example.features.size()});
    CHECK(seen.size() == 500);
  }
  SUBCASE("zero size") {
    SimulatedExpertSpec e{0, {4}, 0.2, 0, true};
    Rng rng(4);
    CHECK(draw_context_set(e, task.context_pool, rng).empty());
  }
  SUBCASE("pool too small") {
    SimulatedExpertSpec e{0, {4}, 0.2, 600, true};
    Rng rng(5);
    CHECK_THROWS_AS(draw_context_set(e, task.context_pool, rng), InvalidInput);
  }
}
