#include <doctest.h>

#include <numeric>
#include <random>

#include "eal2d/deferral.hpp"
#include "eal2d/error.hpp"
#include "oracles.hpp"

using namespace eal2d;
using namespace eal2d::defer;
using expert::BehaviouralRepresentation;

namespace {

BehaviouralRepresentation rep_from_mu(std::vector<double> mu) {
  BehaviouralRepresentation r;
  for (double m : mu) r.posterior.push_back({m * 10, (1 - m) * 10});
  r.expertise_class = expert::argmax_lowest(mu);
  r.mu = std::move(mu);
  return r;
}

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

JointLogits joint(std::initializer_list<double> g, double g_defer) { return {vec(g), g_defer}; }

sim::Dataset blob_task(int n, double separation, std::uint64_t seed) {
  sim::SyntheticTaskSpec s;
  s.num_classes = 3;
  s.feature_dim = 2;
  s.separation = separation;
  s.train_size = n;
  s.validation_size = 0;
  s.test_size = 0;
  s.context_pool_size = 0;
  s.seed = seed;
  return sim::generate_gaussian_task(s).train;
}

}  // namespace

TEST_CASE("assemble_rejector_inputs") {
  SUBCASE("definition") {
    const auto in = assemble_rejector_inputs(vec({0.1, 0.7, 0.2}), rep_from_mu({0.9, 0.5, 0.5}));
    CHECK(in.rho_expertise == 0.1);
    CHECK(in.rho_max == 0.7);
    CHECK(in.mu_at_kstar == 0.5);
    CHECK(in.mu_expertise == 0.9);
    CHECK(in.top_class == 1);
    CHECK(in.expertise_class == 0);
    CHECK(in.as_vector() == vec({0.1, 0.7, 0.5, 0.9}));
  }
  SUBCASE("classifier certain of the expertise class") {
    const auto in = assemble_rejector_inputs(vec({0, 1, 0}), rep_from_mu({0.3, 0.95, 0.4}));
    CHECK(in.rho_expertise == 1.0);
    CHECK(in.rho_max == 1.0);
    CHECK(in.mu_at_kstar == in.mu_expertise);
  }
  SUBCASE("expert weak where the classifier is confident") {
    const auto in = assemble_rejector_inputs(vec({0.0, 0.95, 0.05}), rep_from_mu({0.97, 0.22, 0.5}));
    CHECK(in.rho_expertise == 0.0);
    CHECK(in.rho_max == 0.95);
    CHECK(in.mu_at_kstar == 0.22);
    CHECK(in.mu_expertise == 0.97);
  }
  SUBCASE("top class ties go to the lowest index") {
    CHECK(assemble_rejector_inputs(vec({0.4, 0.4, 0.2}), rep_from_mu({0.5, 0.6, 0.7})).top_class == 0);
  }
  SUBCASE("mismatched class count") {
    CHECK_THROWS_AS(assemble_rejector_inputs(vec({0.5, 0.5}), rep_from_mu({0.5, 0.6, 0.7})), InvalidInput);
  }
}

TEST_CASE("deferral_logit") {
  const auto zero = nn::DenseNet::zeros({4, 32, 32, 1}, nn::Activation::Relu);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u;
  for (int i = 0; i < 50; ++i) {
    const RejectorInput in{u(rng), u(rng), u(rng), u(rng), 0, 0};
    CHECK(deferral_logit(zero, in) == 0.0);
  }
  const auto wrong = nn::DenseNet::zeros({3, 1}, nn::Activation::Relu);
  CHECK_THROWS_AS(deferral_logit(wrong, {}), InvalidInput);
}

TEST_CASE("ea_l2d_loss") {
  SUBCASE("deferral term off when the expertise class is not the label") {
    const auto l = ea_l2d_loss(joint({0.3, -1.0, 2.0}, 0.5), 1, rep_from_mu({0.9, 0.5, 0.5}));
    CHECK(l.deferral_term == 0.0);
    CHECK(l.total == doctest::Approx(oracle::weighted_cross_entropy({0.3, -1.0, 2.0}, 0.5, 1, 0.0)).epsilon(1e-14));
  }
  SUBCASE("all-zero logits") {
    const auto l = ea_l2d_loss(joint({0, 0, 0}, 0), 2, rep_from_mu({0.5, 0.5, 0.8}));
    CHECK(l.classifier_term == doctest::Approx(std::log(4.0)).epsilon(1e-15));
    CHECK(l.deferral_term == doctest::Approx(0.8 * std::log(4.0)).epsilon(1e-15));
    CHECK(l.total == doctest::Approx(2.4953).epsilon(1e-4));
    CHECK(std::abs(l.total - (l.classifier_term + l.deferral_term)) <= 1e-12);
  }
  SUBCASE("label out of range") {
    CHECK_THROWS_AS(ea_l2d_loss(joint({0, 0, 0}, 0), 3, rep_from_mu({0.5, 0.5, 0.8})), InvalidInput);
  }
  SUBCASE("deferral term is linear in mu at the label") {
    const auto full = ea_l2d_loss(joint({0.2, 1.1, -0.3}, 0.7), 1, rep_from_mu({0.1, 0.8, 0.3}));
    const auto half = ea_l2d_loss(joint({0.2, 1.1, -0.3}, 0.7), 1, rep_from_mu({0.05, 0.4, 0.15}));
    CHECK(half.deferral_term == full.deferral_term / 2);
  }
  SUBCASE("matches the reference formula and its numerical gradient") {
    std::mt19937_64 rng(17);
    std::normal_distribution<double> n(0, 2);
    std::uniform_real_distribution<double> u(0.01, 0.99);
    for (int rep = 0; rep < 200; ++rep) {
      const int k = 2 + rep % 6;
      std::vector<double> g(static_cast<std::size_t>(k)), mu(static_cast<std::size_t>(k));
      for (int i = 0; i < k; ++i) {
        g[static_cast<std::size_t>(i)] = n(rng);
        mu[static_cast<std::size_t>(i)] = u(rng);
      }
      const double gd = n(rng);
      const auto r = rep_from_mu(mu);
      const int y = rep % 3 == 0 ? r.expertise_class : static_cast<int>(rng() % static_cast<unsigned>(k));
      const double w = y == r.expertise_class ? mu[static_cast<std::size_t>(y)] : 0.0;

      Vector gv(k);
      for (int i = 0; i < k; ++i) gv(i) = g[static_cast<std::size_t>(i)];
      const auto l = ea_l2d_loss({gv, gd}, y, r);
      CHECK(l.total == doctest::Approx(oracle::weighted_cross_entropy(g, gd, y, w)).epsilon(1e-12));

      std::vector<double> stacked = g;
      stacked.push_back(gd);
      const auto numeric = oracle::numeric_gradient(
          [&](const std::vector<double>& s) {
            return oracle::weighted_cross_entropy({s.begin(), s.end() - 1}, s.back(), y, w);
          },
          stacked);
      for (int i = 0; i <= k; ++i) {
        const double c = numeric[static_cast<std::size_t>(i)];
        CHECK(std::abs(l.logit_gradient(i) - c) / std::max(1.0, std::abs(c)) < 1e-6);
      }
    }
  }
}

TEST_CASE("mode_prediction and pop_avg_loss") {
  const std::vector<int> a{2, 2, 1}, tie{0, 1};
  CHECK(mode_prediction(a) == 2);
  CHECK(mode_prediction(tie) == 0);
  CHECK_THROWS_AS(mode_prediction(std::vector<int>{}), InvalidInput);

  CHECK(pop_avg_loss(joint({0.1, 0.2, 0.3}, 0.0), 2, a).deferral_term > 0.0);
  CHECK(pop_avg_loss(joint({0.1, 0.2}, 0.0), 1, tie).deferral_term == 0.0);

  // Oracle population: the single-expert loss with m = y everywhere.
  const std::vector<int> oracles{1, 1, 1, 1};
  const auto l = pop_avg_loss(joint({0.4, -0.2, 1.3}, 0.25), 1, oracles);
  CHECK(l.total == doctest::Approx(oracle::weighted_cross_entropy({0.4, -0.2, 1.3}, 0.25, 1, 1.0)).epsilon(1e-13));
}

TEST_CASE("decide") {
  const auto at_tie = decide(joint({1, 2, 3}, 3), 4);
  CHECK(at_tie.defer);
  CHECK(at_tie.chosen_expert == 4);
  const auto predict = decide(joint({5, 0, 0}, -1), 4);
  CHECK_FALSE(predict.defer);
  CHECK(predict.predicted_class == 0);
  CHECK_FALSE(decide(joint({0.5, 1.0}, std::nextafter(1.0, 0.0)), 0).defer);
  CHECK(decide(joint({2, 2, 1}, 1), 0).predicted_class == 0);
}

TEST_CASE("method names") {
  CHECK(parse_method("ea_l2d") == Method::EaL2d);
  CHECK(parse_method(to_string(Method::PopAvg)) == Method::PopAvg);
  CHECK_THROWS_AS(parse_method("l2d_pop"), InvalidInput);
}

TEST_CASE("expert-agnostic deferral logit") {
  std::mt19937_64 rng(3);
  const auto model = make_model(Method::EaL2d, 2, 4, {}, 7);
  std::normal_distribution<double> n;
  const auto rep = rep_from_mu({0.3, 0.9, 0.4, 0.45});
  const auto twin = rep;
  for (int i = 0; i < 100; ++i) {
    Vector x(2);
    x << n(rng), n(rng);
    CHECK(joint_logits(model, x, &rep).deferral_logit == joint_logits(model, x, &twin).deferral_logit);
  }
}

TEST_CASE("joint class permutation leaves the rejector input unchanged") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.01, 0.99);
  for (int rep = 0; rep < 100; ++rep) {
    const int k = 3 + rep % 5;
    Vector rho(k);
    std::vector<double> mu(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) {
      rho(i) = u(rng);
      mu[static_cast<std::size_t>(i)] = u(rng);
    }
    rho /= rho.sum();
    std::vector<int> perm(static_cast<std::size_t>(k));
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Vector rho_p(k);
    std::vector<double> mu_p(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) {
      rho_p(perm[static_cast<std::size_t>(i)]) = rho(i);
      mu_p[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])] = mu[static_cast<std::size_t>(i)];
    }
    const auto a = assemble_rejector_inputs(rho, rep_from_mu(mu));
    const auto b = assemble_rejector_inputs(rho_p, rep_from_mu(mu_p));
    CHECK(a.as_vector() == b.as_vector());
    CHECK(b.top_class == perm[static_cast<std::size_t>(a.top_class)]);
    CHECK(b.expertise_class == perm[static_cast<std::size_t>(a.expertise_class)]);
  }
}

TEST_CASE("per-example gradients agree with central differences") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n;
  std::uniform_real_distribution<double> u(0.05, 0.95);
  for (int rep = 0; rep < 10; ++rep) {
    const int k = 3;
    auto model = make_model(Method::EaL2d, 3, k, {{6}, {5, 5}}, 100 + rep);
    Vector x(3);
    x << n(rng), n(rng), n(rng);
    const std::vector<BehaviouralRepresentation> reps{rep_from_mu({u(rng), u(rng), u(rng)}),
                                                      rep_from_mu({u(rng), u(rng), u(rng)})};
    const int y = reps[0].expertise_class;

    const auto cls = nn::finite_difference_check(
        model.classifier,
        [&](const nn::DenseNet& net) {
          auto m = model;
          m.classifier = net;
          const auto g = ea_l2d_example(m, x, y, reps);
          return nn::LossAndGradient{g.loss, g.classifier};
        },
        1e-6);
    const auto rej = nn::finite_difference_check(
        model.rejector,
        [&](const nn::DenseNet& net) {
          auto m = model;
          m.rejector = net;
          const auto g = ea_l2d_example(m, x, y, reps);
          return nn::LossAndGradient{g.loss, g.rejector};
        },
        1e-6);
    CHECK(cls.max_relative_error < 1e-6);
    CHECK(rej.max_relative_error < 1e-6);
    CHECK(cls.checked > 0);
    CHECK(rej.checked > 0);
  }
}

TEST_CASE("training") {
  const auto data = blob_task(300, 6.0, 2);
  const auto val = blob_task(90, 6.0, 3);
  std::vector<TrainingExpert> experts;
  for (int e = 0; e < 2; ++e) {
    std::vector<expert::ContextExample> ctx;
    for (int i = 0; i < 30; ++i) ctx.push_back({i % 3, i % 3});
    experts.push_back({e, ctx, expert::uniform_priors(3)});
  }
  nn::TrainConfig cfg;
  cfg.batch_size = 32;

  SUBCASE("zero epochs leave the networks unchanged") {
    cfg.epochs = 0;
    const auto model = make_model(Method::EaL2d, 2, 3, {}, 1);
    const auto r = train(model, data, val, experts, cfg);
    CHECK(r.model == model);
    CHECK(r.epochs_run == 0);
  }
  SUBCASE("loss falls on a separable task with oracle experts") {
    cfg.epochs = 50;
    const auto r = train(make_model(Method::EaL2d, 2, 3, {}, 1), data, val, experts, cfg);
    CHECK(r.train_loss.size() == 50);
    CHECK(r.train_loss.back() < r.train_loss.front());
  }
  SUBCASE("same seed, same history") {
    cfg.epochs = 5;
    const auto a = train(make_model(Method::EaL2d, 2, 3, {}, 1), data, val, experts, cfg);
    const auto b = train(make_model(Method::EaL2d, 2, 3, {}, 1), data, val, experts, cfg);
    CHECK(a.train_loss == b.train_loss);
    CHECK(a.model == b.model);
  }
  SUBCASE("early stopping restores the best epoch") {
    cfg.epochs = 60;
    cfg.patience = 2;
    const auto r = train(make_model(Method::EaL2d, 2, 3, {}, 1), data, val, experts, cfg);
    CHECK(r.best_epoch >= 0);
    CHECK(r.epochs_run <= 60);
    const double best = *std::min_element(r.validation_loss.begin(), r.validation_loss.end());
    CHECK(r.validation_loss[static_cast<std::size_t>(r.best_epoch)] == best);
  }
  SUBCASE("divergence names the batch") {
    cfg.epochs = 3;
    cfg.learning_rate = 1e300;
    try {
      train(make_model(Method::EaL2d, 2, 3, {}, 1), data, val, experts, cfg);
      FAIL("expected divergence");
    } catch (const TrainingDivergence& e) {
      CHECK(std::string(e.what()).find("batch") != std::string::npos);
    }
  }
  SUBCASE("subsample larger than a context") {
    cfg.epochs = 1;
    CHECK_THROWS_AS(train(make_model(Method::EaL2d, 2, 3, {}, 1), data, val, experts, cfg, 31), InvalidInput);
  }
  SUBCASE("baseline trains on the population's predictions") {
    cfg.epochs = 20;
    std::vector<std::vector<int>> q, v;
    for (const auto& ex : data.examples) q.push_back({ex.label, ex.label});
    for (const auto& ex : val.examples) v.push_back({ex.label, ex.label});
    const auto r = train_pop_avg(make_model(Method::PopAvg, 2, 3, {}, 1), data, val, q, v, cfg);
    CHECK(r.train_loss.back() < r.train_loss.front());
    CHECK_THROWS_AS(train_pop_avg(make_model(Method::PopAvg, 2, 3, {}, 1), data, val, {}, v, cfg), InvalidInput);
  }
}
