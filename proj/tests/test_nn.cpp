#include <doctest.h>

#include <random>

#include "eal2d/error.hpp"
#include "eal2d/nn.hpp"
#include "oracles.hpp"

using namespace eal2d;
using nn::Activation;
using nn::DenseNet;
using nn::Matrix;
using nn::Vector;

namespace {

Vector random_vector(int n, std::mt19937_64& rng) {
  std::normal_distribution<double> d;
  Vector v(n);
  for (int i = 0; i < n; ++i) v(i) = d(rng);
  return v;
}

// 0.5 * ||net(x) - target||^2 with analytic gradient.
nn::NetObjective squared_error(Vector x, Vector target) {
  return [x, target](const DenseNet& net) {
    const auto trace = nn::forward_trace(net, x);
    const Vector diff = trace.output() - target;
    return nn::LossAndGradient{0.5 * diff.squaredNorm(), nn::backward(net, trace, diff).gradient};
  };
}

}  // namespace

TEST_CASE("zero network gives zero logits") {
  const auto net = DenseNet::zeros({5, 7, 3}, Activation::Relu);
  std::mt19937_64 rng(3);
  const Vector out = nn::forward(net, random_vector(5, rng));
  CHECK(out.size() == 3);
  CHECK(out.isZero(0.0));
}

TEST_CASE("identity layer passes input through") {
  const DenseNet net({{Matrix::Identity(4, 4), Vector::Zero(4), Activation::Identity}});
  Vector v(4);
  v << 1.5, -2.0, 0.0, 3.25;
  CHECK(nn::forward(net, v) == v);
}

TEST_CASE("forward matches a plain-loop recomputation") {
  std::mt19937_64 rng(11);
  const auto net = DenseNet::glorot({4, 8, 1}, Activation::Relu, rng);
  for (int rep = 0; rep < 20; ++rep) {
    const Vector x = random_vector(4, rng);
    const auto expect = oracle::dense_forward(net, {x.data(), x.data() + x.size()});
    CHECK(nn::forward(net, x)(0) == doctest::Approx(expect[0]).epsilon(1e-14));
  }
}

TEST_CASE("forward rejects a wrong input length") {
  std::mt19937_64 rng(1);
  const auto net = DenseNet::glorot({4, 8, 1}, Activation::Relu, rng);
  CHECK_THROWS_AS(nn::forward(net, Vector::Zero(3)), InvalidInput);
}

TEST_CASE("layers that do not compose are rejected") {
  CHECK_THROWS_AS(DenseNet({{Matrix::Zero(3, 2), Vector::Zero(3), Activation::Relu},
                            {Matrix::Zero(1, 4), Vector::Zero(1), Activation::Identity}}),
                  InvalidInput);
  CHECK_THROWS_AS(DenseNet({{Matrix::Zero(3, 2), Vector::Zero(2), Activation::Relu}}), InvalidInput);
}

TEST_CASE("glorot initialisation stays inside its bound and is seeded") {
  std::mt19937_64 a(5), b(5);
  const auto net = DenseNet::glorot({6, 10, 2}, Activation::Relu, a);
  CHECK(net == DenseNet::glorot({6, 10, 2}, Activation::Relu, b));
  for (const auto& layer : net.layers()) {
    const double limit = std::sqrt(6.0 / (layer.input_dim() + layer.output_dim()));
    CHECK(layer.weights.cwiseAbs().maxCoeff() <= limit);
    CHECK(layer.bias.isZero(0.0));
  }
}

TEST_CASE("softmax") {
  SUBCASE("symmetric input") {
    const Vector q = nn::softmax(Vector::Zero(3));
    for (int i = 0; i < 3; ++i) CHECK(q(i) == doctest::Approx(1.0 / 3).epsilon(1e-15));
  }
  SUBCASE("large logits do not overflow") {
    Vector g(2);
    g << 1000, 0;
    const Vector q = nn::softmax(g);
    CHECK(q.allFinite());
    CHECK(q(0) == doctest::Approx(1.0));
    CHECK(q(1) < 1e-300);
  }
  SUBCASE("empty input") { CHECK_THROWS_AS(nn::softmax(Vector()), InvalidInput); }
  SUBCASE("sums to one and is shift invariant") {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> shift(-50, 50);
    for (int rep = 0; rep < 200; ++rep) {
      const Vector v = 5 * random_vector(1 + rep % 12, rng);
      const Vector q = nn::softmax(v);
      CHECK(std::abs(q.sum() - 1.0) <= 1e-12);
      CHECK((q.array() > 0).all());
      const Vector moved = nn::softmax((v.array() + shift(rng)).matrix());
      CHECK((q - moved).cwiseAbs().maxCoeff() <= 1e-12);
    }
  }
}

TEST_CASE("log_sum_exp agrees with the direct formula on small logits") {
  Vector g(3);
  g << 0.1, -0.4, 1.2;
  CHECK(nn::log_sum_exp(g) == doctest::Approx(std::log(std::exp(0.1) + std::exp(-0.4) + std::exp(1.2))));
}

TEST_CASE("backward") {
  std::mt19937_64 rng(8);
  SUBCASE("zero upstream gives a zero bundle") {
    const auto net = DenseNet::glorot({3, 5, 2}, Activation::Relu, rng);
    const auto b = nn::backward(net, random_vector(3, rng), Vector::Zero(2));
    CHECK(b.gradient.shape_matches(net));
    for (std::size_t i = 0; i < net.parameter_count(); ++i) CHECK(b.gradient.parameter(i) == 0.0);
  }
  SUBCASE("single linear layer with squared error") {
    const auto net = DenseNet::glorot({3, 2}, Activation::Relu, rng);
    const Vector x = random_vector(3, rng), y = random_vector(2, rng);
    const Vector residual = nn::forward(net, x) - y;
    const auto b = nn::backward(net, x, residual);
    const Matrix expect = residual * x.transpose();
    CHECK((b.gradient.weights[0] - expect).cwiseAbs().maxCoeff() <= 1e-14);
    CHECK((b.gradient.biases[0] - residual).cwiseAbs().maxCoeff() <= 1e-14);
    CHECK((b.input_gradient - net.layers()[0].weights.transpose() * residual).cwiseAbs().maxCoeff() <= 1e-14);
  }
  SUBCASE("shape mismatch") {
    const auto net = DenseNet::glorot({3, 5, 2}, Activation::Relu, rng);
    CHECK_THROWS_AS(nn::backward(net, random_vector(3, rng), Vector::Zero(3)), InvalidInput);
  }
  SUBCASE("random nets agree with central differences") {
    for (int rep = 0; rep < 20; ++rep) {
      const auto net = DenseNet::glorot({4, 8, 8, 2}, Activation::Relu, rng);
      const auto check = nn::finite_difference_check(
          net, squared_error(random_vector(4, rng), random_vector(2, rng)), 1e-6);
      CHECK(check.checked > 0);
      CHECK(check.max_relative_error < 1e-5);
    }
  }
}

TEST_CASE("finite_difference_check") {
  std::mt19937_64 rng(9);
  SUBCASE("linear net with squared loss is essentially exact") {
    const auto net = DenseNet::glorot({5, 3}, Activation::Identity, rng);
    const auto check = nn::finite_difference_check(
        net, squared_error(random_vector(5, rng), random_vector(3, rng)), 1e-5);
    CHECK(check.skipped == 0);
    CHECK(check.checked == net.parameter_count());
    CHECK(check.max_relative_error < 1e-8);
  }
  SUBCASE("a parameter sitting on a relu kink is skipped") {
    // Hidden unit pre-activation is exactly zero at this input, so its
    // incoming weights and bias sit on the kink.
    Matrix w1(1, 1);
    w1 << 1.0;
    Vector b1(1);
    b1 << -1.0;
    Matrix w2(1, 1);
    w2 << 2.0;
    const DenseNet net({{w1, b1, Activation::Relu}, {w2, Vector::Zero(1), Activation::Identity}});
    Vector x(1), y(1);
    x << 1.0;
    y << 3.0;
    const auto check = nn::finite_difference_check(net, squared_error(x, y), 1e-5);
    CHECK(check.skipped >= 2);
    CHECK(check.max_relative_error < 1e-8);
  }
  SUBCASE("epsilon outside the supported range") {
    const auto net = DenseNet::glorot({2, 1}, Activation::Identity, rng);
    CHECK_THROWS_AS(nn::finite_difference_check(net, squared_error(Vector::Zero(2), Vector::Zero(1)), 1e-2),
                    InvalidInput);
  }
}

TEST_CASE("sgd_step") {
  std::mt19937_64 rng(4);
  const auto net = DenseNet::glorot({3, 4, 2}, Activation::Relu, rng);
  nn::TrainConfig cfg;

  SUBCASE("zero gradient without decay leaves the net unchanged") {
    auto copy = net;
    nn::sgd_step(copy, nn::GradientBundle::zeros_like(net), cfg);
    CHECK(copy == net);
  }
  SUBCASE("lr 1 with grad = w zeroes every weight") {
    auto copy = net;
    nn::GradientBundle g = nn::GradientBundle::zeros_like(net);
    for (std::size_t i = 0; i < net.layers().size(); ++i) {
      g.weights[i] = net.layers()[i].weights;
      g.biases[i] = net.layers()[i].bias;
    }
    cfg.learning_rate = 1.0;
    nn::sgd_step(copy, g, cfg);
    for (std::size_t i = 0; i < copy.parameter_count(); ++i) CHECK(copy.parameter(i) == 0.0);
  }
  SUBCASE("weight decay shrinks towards zero") {
    auto copy = net;
    cfg.learning_rate = 0.1;
    cfg.weight_decay = 0.5;
    nn::sgd_step(copy, nn::GradientBundle::zeros_like(net), cfg);
    for (std::size_t i = 0; i < net.parameter_count(); ++i)
      CHECK(copy.parameter(i) == doctest::Approx(net.parameter(i) * 0.95));
  }
  SUBCASE("one step on a one-parameter quadratic lowers the loss") {
    Matrix w(1, 1);
    w << 3.0;
    DenseNet single({{w, Vector::Zero(1), Activation::Identity}});
    Vector x(1), y(1);
    x << 1.0;
    y << 0.5;
    const auto objective = squared_error(x, y);
    const auto before = objective(single);
    cfg.learning_rate = 0.1;
    nn::sgd_step(single, before.gradient, cfg);
    CHECK(objective(single).loss < before.loss);
  }
  SUBCASE("non-finite gradient is a divergence") {
    auto copy = net;
    auto g = nn::GradientBundle::zeros_like(net);
    g.weights[0](0, 0) = std::nan("");
    CHECK_THROWS_AS(nn::sgd_step(copy, g, cfg), TrainingDivergence);
  }
  SUBCASE("mismatched gradient shape") {
    auto copy = net;
    const auto other = DenseNet::zeros({3, 2}, Activation::Relu);
    CHECK_THROWS_AS(nn::sgd_step(copy, nn::GradientBundle::zeros_like(other), cfg), InvalidInput);
  }
}

TEST_CASE("train config validation") {
  nn::TrainConfig cfg;
  cfg.learning_rate = 0;
  CHECK_THROWS_AS(cfg.validate(), InvalidInput);
  cfg = {};
  cfg.batch_size = 0;
  CHECK_THROWS_AS(cfg.validate(), InvalidInput);
}

TEST_CASE("flat parameter order is weights column-major then bias") {
  Matrix w(2, 2);
  w << 1, 2, 3, 4;
  Vector b(2);
  b << 5, 6;
  const DenseNet net({{w, b, Activation::Identity}});
  const double expect[] = {1, 3, 2, 4, 5, 6};
  REQUIRE(net.parameter_count() == 6);
  for (std::size_t i = 0; i < 6; ++i) CHECK(net.parameter(i) == expect[i]);
}
