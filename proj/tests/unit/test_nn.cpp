#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "cyto/error.hpp"
#include "cyto/nn/adam.hpp"
#include "cyto/nn/graph.hpp"
#include "cyto/nn/init.hpp"
#include "cyto/nn/ops.hpp"
#include "gradcheck.hpp"
#include "reference.hpp"

using namespace cyto;
using namespace cyto::nn;

namespace {

Tensor iota_tensor(Shape s, float start = 1.0f) {
  Tensor t(std::move(s));
  float v = start;
  for (float& x : t.data()) x = v++;
  return t;
}

ref::T to_ref(const Tensor& t) {
  ref::T r(t.shape());
  for (size_t i = 0; i < t.numel(); ++i) r.v[i] = t.data()[i];
  return r;
}

}  // namespace

TEST_CASE("tensor basics") {
  Tensor t({2, 3}, 1.5f);
  CHECK(t.numel() == 6);
  CHECK(t.rank() == 2);
  CHECK(t.dim(1) == 3);
  CHECK_THROWS_AS(Tensor({2, 0}), DimensionError);
  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<float>{1, 2, 3}), DimensionError);
  CHECK_THROWS_AS(t.item(), UsageError);

  Tensor alias = t;
  alias.at(0) = 9.0f;
  CHECK(t.at(0) == 9.0f);
  Tensor deep = t.clone();
  deep.at(0) = 1.0f;
  CHECK(t.at(0) == 9.0f);
  CHECK(t.reshaped({3, 2}).same_storage(t) == false);
  CHECK(t.reshaped({3, 2}).at(0) == 9.0f);
  CHECK_THROWS_AS(t.reshaped({4, 2}), DimensionError);
  CHECK_FALSE(t.has_grad());
  CHECK(t.grad().size() == 6);
  CHECK(t.has_grad());
}

TEST_CASE("check_finite flags NaN and Inf") {
  Tensor t({3}, 0.0f);
  CHECK_NOTHROW(check_finite(t, "x"));
  t.at(1) = std::nanf("");
  CHECK_THROWS_AS(check_finite(t, "x"), NumericError);
  t.at(1) = INFINITY;
  CHECK_THROWS_AS(check_finite(t, "x"), NumericError);
}

TEST_CASE("conv2d examples") {
  Graph g = Graph::inference();
  SUBCASE("zero input gives the bias") {
    Tensor x({1, 2, 4, 4}, 0.0f);
    Tensor w({3, 2, 3, 3}, 0.7f);
    Tensor b({3}, std::vector<float>{0.5f, -1.0f, 2.0f});
    Tensor y = conv2d(g, x, w, b, 1, 1);
    REQUIRE(y.shape() == Shape{1, 3, 4, 4});
    for (int c = 0; c < 3; ++c)
      for (int i = 0; i < 16; ++i) CHECK(y.at(c * 16 + i) == b.at(c));
  }
  SUBCASE("all-ones kernel centre sum is 45") {
    Tensor x = iota_tensor({1, 1, 3, 3});
    Tensor w({1, 1, 3, 3}, 1.0f);
    Tensor b({1}, 0.0f);
    Tensor y = conv2d(g, x, w, b, 1, 1);
    CHECK(y.at(4) == 45.0f);
    CHECK(y.at(0) == 1 + 2 + 4 + 5);
  }
  SUBCASE("identity kernel") {
    Tensor x = iota_tensor({2, 1, 5, 4});
    Tensor w({1, 1, 3, 3}, 0.0f);
    w.at(4) = 1.0f;
    Tensor y = conv2d(g, x, w, Tensor({1}, 0.0f), 1, 1);
    for (size_t i = 0; i < x.numel(); ++i) CHECK(y.at(i) == x.at(i));
  }
  SUBCASE("output extent formula") {
    Tensor x({1, 2, 9, 7}, 1.0f);
    Tensor y = conv2d(g, x, Tensor({4, 2, 3, 3}, 0.1f), Tensor({4}, 0.0f), 2, 1);
    CHECK(y.shape() == Shape{1, 4, 5, 4});
  }
  SUBCASE("errors") {
    Tensor x({1, 2, 4, 4}, 1.0f);
    CHECK_THROWS_AS(conv2d(g, x, Tensor({1, 3, 3, 3}), Tensor({1})), DimensionError);
    CHECK_THROWS_AS(conv2d(g, x, Tensor({1, 2, 2, 2}), Tensor({1})), DimensionError);
    CHECK_THROWS_AS(conv2d(g, x, Tensor({1, 2, 3, 3}), Tensor({2})), DimensionError);
    CHECK_THROWS_AS(conv2d(g, Tensor({1, 2, 2, 2}), Tensor({1, 2, 3, 3}), Tensor({1})), DimensionError);
    Tensor big({1, 2, 4, 4}, 3e38f);
    CHECK_THROWS_AS(conv2d(g, big, Tensor({1, 2, 3, 3}, 10.0f), Tensor({1}), 1, 1), NumericError);
  }
}

TEST_CASE("conv2d equals a nested-loop oracle exactly on integer inputs") {
  std::mt19937_64 rng(11);
  Graph g = Graph::inference();
  for (int trial = 0; trial < 30; ++trial) {
    const int n = 1 + static_cast<int>(rng() % 2), cin = 1 + static_cast<int>(rng() % 3);
    const int h = 3 + static_cast<int>(rng() % 6), w = 3 + static_cast<int>(rng() % 6);
    const int cout = 1 + static_cast<int>(rng() % 3), k = rng() % 2 ? 3 : 1;
    const int stride = 1 + static_cast<int>(rng() % 2), pad = static_cast<int>(rng() % 2);
    auto rnd = [&](Shape s) {
      Tensor t(std::move(s));
      for (float& v : t.data()) v = static_cast<float>(static_cast<int>(rng() % 9) - 4);
      return t;
    };
    Tensor x = rnd({n, cin, h, w}), wt = rnd({cout, cin, k, k}), b = rnd({cout});
    Tensor y = conv2d(g, x, wt, b, stride, pad);
    ref::T r = ref::conv2d(to_ref(x), to_ref(wt), to_ref(b), stride, pad);
    REQUIRE(y.shape() == r.shape);
    for (size_t i = 0; i < r.v.size(); ++i) CHECK(y.at(i) == r.v[i]);
  }
}

TEST_CASE("conv2d on a large input matches the oracle") {
  // Exercises the blocked path: many output rows per image.
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<float> u(-1, 1);
  Tensor x({2, 5, 70, 66}), w({7, 5, 3, 3}), b({7});
  for (Tensor* t : {&x, &w, &b})
    for (float& v : t->data()) v = u(rng);
  Graph g = Graph::inference();
  Tensor y = conv2d(g, x, w, b, 1, 1);
  ref::T r = ref::conv2d(to_ref(x), to_ref(w), to_ref(b), 1, 1);
  double worst = 0;
  for (size_t i = 0; i < r.v.size(); ++i) worst = std::max(worst, std::abs(y.at(i) - r.v[i]));
  CHECK(worst < 1e-4);
}

TEST_CASE("maxpool2d") {
  Graph g = Graph::inference();
  Tensor c({1, 2, 4, 4}, 3.25f);
  Tensor y = maxpool2d(g, c);
  CHECK(y.shape() == Shape{1, 2, 2, 2});
  for (float v : y.data()) CHECK(v == 3.25f);

  Tensor win({1, 1, 2, 2}, std::vector<float>{1, 2, 3, 4});
  CHECK(maxpool2d(g, win).item() == 4.0f);
  CHECK(maxpool2d(g, Tensor({1, 1, 64, 64})).shape() == Shape{1, 1, 32, 32});
  CHECK_THROWS_AS(maxpool2d(g, Tensor({1, 1, 5, 4})), DimensionError);

  SUBCASE("ties route the gradient to the first maximum") {
    Graph gg;
    Tensor x({1, 1, 2, 2}, std::vector<float>{5, 5, 5, 5}, true);
    Tensor s = sum(gg, maxpool2d(gg, x));
    gg.backward(s);
    CHECK(x.grad()[0] == 1.0f);
    CHECK(x.grad()[1] == 0.0f);
    CHECK(x.grad()[2] == 0.0f);
    CHECK(x.grad()[3] == 0.0f);
  }
}

TEST_CASE("linear") {
  Graph g = Graph::inference();
  Tensor x({1, 2}, std::vector<float>{1, 2});
  Tensor w({2, 2}, std::vector<float>{1, 1, 0, 1});
  Tensor b({2}, std::vector<float>{0, 1});
  Tensor y = linear(g, x, w, b);
  CHECK(y.at(0) == 3.0f);
  CHECK(y.at(1) == 3.0f);

  Tensor id({2, 2}, std::vector<float>{1, 0, 0, 1});
  Tensor y2 = linear(g, x, id, Tensor({2}, 0.0f));
  CHECK(y2.at(0) == 1.0f);
  CHECK(y2.at(1) == 2.0f);

  Tensor z = linear(g, Tensor({3, 2}, 0.0f), w, b);
  for (int r = 0; r < 3; ++r) {
    CHECK(z.at(r * 2) == 0.0f);
    CHECK(z.at(r * 2 + 1) == 1.0f);
  }
  CHECK_THROWS_AS(linear(g, Tensor({1, 3}), w, b), DimensionError);
  CHECK_THROWS_AS(linear(g, x, w, Tensor({3})), DimensionError);
}

TEST_CASE("relu values and subgradient") {
  Graph g;
  Tensor x({3}, std::vector<float>{-1, 0, 2}, true);
  Tensor y = relu(g, x);
  CHECK(y.at(0) == 0.0f);
  CHECK(y.at(1) == 0.0f);
  CHECK(y.at(2) == 2.0f);
  Tensor s = sum(g, y);
  g.backward(s);
  CHECK(x.grad()[0] == 0.0f);
  CHECK(x.grad()[1] == 0.0f);
  CHECK(x.grad()[2] == 1.0f);

  Graph g2;
  Tensor neg({4}, -2.0f, true);
  Tensor s2 = sum(g2, relu(g2, neg));
  g2.backward(s2);
  for (float v : neg.grad()) CHECK(v == 0.0f);
}

TEST_CASE("softmax") {
  Graph g = Graph::inference();
  Tensor eq({1, 5}, 0.3f);
  Tensor pe = softmax(g, eq);
  for (float v : pe.data()) CHECK(v == doctest::Approx(0.2).epsilon(1e-7));

  Tensor two({1, 2}, std::vector<float>{0.0f, std::log(2.0f)});
  Tensor p = softmax(g, two);
  CHECK(p.at(0) == doctest::Approx(1.0 / 3).epsilon(1e-6));
  CHECK(p.at(1) == doctest::Approx(2.0 / 3).epsilon(1e-6));

  std::mt19937_64 rng(3);
  std::normal_distribution<float> nd(0, 3);
  Tensor z({4, 6});
  for (float& v : z.data()) v = nd(rng);
  Tensor shifted = z.clone();
  for (float& v : shifted.data()) v += 100.0f;
  Tensor a = softmax(g, z), b = softmax(g, shifted);
  for (int r = 0; r < 4; ++r) {
    double s = 0;
    int am = 0, az = 0;
    for (int c = 0; c < 6; ++c) {
      s += a.at(r * 6 + c);
      CHECK(a.at(r * 6 + c) == doctest::Approx(b.at(r * 6 + c)).epsilon(1e-5));
      if (a.at(r * 6 + c) > a.at(r * 6 + am)) am = c;
      if (z.at(r * 6 + c) > z.at(r * 6 + az)) az = c;
    }
    CHECK(std::abs(s - 1.0) <= 1e-6);
    CHECK(am == az);
  }
  CHECK_THROWS_AS(softmax(g, Tensor({2, 1})), DimensionError);
}

TEST_CASE("binary cross-entropy") {
  Graph g = Graph::inference();
  Tensor t({4}, std::vector<float>{0, 1, 1, 0});
  CHECK(binary_cross_entropy(g, t.clone(), t).item() <= 1e-6f);
  Tensor half({1}, 0.5f);
  CHECK(binary_cross_entropy(g, half, Tensor({1}, 1.0f)).item() == doctest::Approx(0.693147).epsilon(1e-6));
  CHECK_THROWS_AS(binary_cross_entropy(g, half, Tensor({1}, 0.5f)), ValidationError);
  CHECK_THROWS_AS(binary_cross_entropy(g, half, Tensor({2}, 1.0f)), DimensionError);

  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.01, 0.99);
  Tensor p({50}), y({50});
  for (int i = 0; i < 50; ++i) {
    p.at(i) = static_cast<float>(u(rng));
    y.at(i) = rng() % 2 ? 1.0f : 0.0f;
  }
  const double direct = ref::bce(to_ref(p), to_ref(y));
  const float got = binary_cross_entropy(g, p, y).item();
  CHECK(got >= 0.0f);
  CHECK(std::abs(got - direct) <= 1e-6);
}

TEST_CASE("cross-entropy") {
  Graph g = Graph::inference();
  std::vector<int> lab = {2, 0};
  Tensor onehot({2, 3}, std::vector<float>{0, 0, 1, 1, 0, 0});
  CHECK(cross_entropy(g, onehot, lab).item() <= 1e-6f);
  Tensor uni({1, 5}, 0.2f);
  std::vector<int> l0 = {3};
  CHECK(cross_entropy(g, uni, l0).item() == doctest::Approx(1.609438).epsilon(1e-6));
  std::vector<int> bad = {5};
  CHECK_THROWS_AS(cross_entropy(g, uni, bad), ValidationError);

  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.05, 1.0);
  Tensor p({6, 4});
  std::vector<int> labels;
  for (int r = 0; r < 6; ++r) {
    double s = 0;
    for (int c = 0; c < 4; ++c) s += (p.at(r * 4 + c) = static_cast<float>(u(rng)));
    for (int c = 0; c < 4; ++c) p.at(r * 4 + c) = static_cast<float>(p.at(r * 4 + c) / s);
    labels.push_back(static_cast<int>(rng() % 4));
  }
  const float got = cross_entropy(g, p, labels).item();
  CHECK(got >= 0.0f);
  CHECK(std::abs(got - ref::ce(to_ref(p), labels)) <= 1e-6);
}

TEST_CASE("concat, flatten, upsample and pooling helpers match the reference") {
  Graph g = Graph::inference();
  Tensor a = iota_tensor({2, 1, 2, 2}), b = iota_tensor({2, 2, 2, 2}, 100.0f);
  Tensor c = concat(g, {a, b});
  ref::T rc = ref::concat({to_ref(a), to_ref(b)});
  REQUIRE(c.shape() == rc.shape);
  for (size_t i = 0; i < rc.v.size(); ++i) CHECK(c.at(i) == rc.v[i]);
  CHECK_THROWS_AS(concat(g, {a, Tensor({2, 1, 3, 2})}), DimensionError);

  CHECK(flatten(g, b).shape() == Shape{2, 8});
  Tensor u = upsample_nearest2x(g, a);
  ref::T ru = ref::upsample2x(to_ref(a));
  for (size_t i = 0; i < ru.v.size(); ++i) CHECK(u.at(i) == ru.v[i]);
  Tensor gp = global_avg_pool(g, b);
  ref::T rg = ref::gap(to_ref(b));
  for (size_t i = 0; i < rg.v.size(); ++i) CHECK(gp.at(i) == doctest::Approx(rg.v[i]));
}

TEST_CASE("backward") {
  SUBCASE("sum gives ones") {
    Graph g;
    Tensor x({2, 3}, 0.5f, true);
    Tensor s = sum(g, x);
    g.backward(s);
    for (float v : x.grad()) CHECK(v == 1.0f);
  }
  SUBCASE("non-scalar loss is a usage error") {
    Graph g;
    Tensor x({2}, 1.0f, true);
    Tensor y = relu(g, x);
    CHECK_THROWS_AS(g.backward(y), UsageError);
  }
  SUBCASE("inference graphs record nothing") {
    Graph g = Graph::inference();
    Tensor x({2}, 1.0f, true);
    relu(g, x);
    CHECK(g.size() == 0);
  }
  SUBCASE("each node is visited once; shared inputs accumulate") {
    Graph g;
    Tensor x({3}, std::vector<float>{1, -2, 3}, true);
    Tensor y = axpby(g, 2.0f, x, 3.0f, x);
    Tensor s = sum(g, y);
    g.backward(s);
    for (float v : x.grad()) CHECK(v == 5.0f);
    CHECK(g.size() == 2);
  }
}

TEST_CASE("two-layer conv + linear network passes the finite-difference check") {
  gradcheck::Program p;
  p.input_shape = {2, 2, 6, 6};
  p.param_shapes = {{3, 2, 3, 3}, {3}, {4, 3 * 2 * 2}, {4}};
  p.trunk = {{gradcheck::Kind::Conv, 0, 1, 0}, {gradcheck::Kind::Relu}, {gradcheck::Kind::Pool}};
  p.cls = {{gradcheck::Kind::Flatten}, {gradcheck::Kind::Linear, 2}};
  p.labels = {1, 3};
  gradcheck::Builder b(2024);
  const auto r = gradcheck::check(p, b.values(p));
  INFO("worst tensor " << r.worst_tensor << " skipped " << r.skipped);
  CHECK(r.max_rel_error <= 1e-3);
  CHECK(r.skipped * 10 <= r.checked);
}

TEST_CASE("random compositions pass the finite-difference check") {
  for (uint64_t seed = 100; seed < 110; ++seed) {
    gradcheck::Builder b(seed);
    const gradcheck::Program p = b.build();
    CHECK(p.parameter_count() <= 10000);
    const auto r = gradcheck::check(p, b.values(p));
    INFO("seed " << seed << ": " << p.describe() << " worst " << r.worst_tensor);
    CHECK(r.max_rel_error <= 1e-3);
  }
}

TEST_CASE("adam") {
  SUBCASE("zero gradient is a fixed point") {
    Tensor w({3}, std::vector<float>{1, -2, 3}, true);
    Adam opt({w});
    w.zero_grad();
    for (int i = 0; i < 5; ++i) opt.step();
    CHECK(w.at(0) == 1.0f);
    CHECK(w.at(1) == -2.0f);
    CHECK(w.at(2) == 3.0f);
    CHECK(opt.step_count() == 5);
  }
  SUBCASE("first step from theta 0 with g 1") {
    Tensor w({1}, 0.0f, true);
    Adam opt({w});
    w.grad()[0] = 1.0f;
    opt.step();
    // m_hat = 1, v_hat = 1: step = lr / (1 + eps)
    CHECK(w.at(0) == doctest::Approx(-0.001 / (1 + 1e-8)).epsilon(1e-6));
    CHECK(opt.first_moment(0)[0] == doctest::Approx(0.1));
    CHECK(opt.second_moment(0)[0] == doctest::Approx(0.001));
  }
  SUBCASE("identical runs give identical trajectories") {
    auto run = [] {
      Rng rng(42);
      LinearParams lp = make_linear(4, 3, rng);
      Adam opt({lp.weight, lp.bias});
      for (int step = 0; step < 10; ++step) {
        Graph g;
        Tensor x({2, 4}, 0.25f * static_cast<float>(step));
        std::vector<int> lab = {0, 2};
        Tensor loss = cross_entropy(g, softmax(g, linear(g, x, lp.weight, lp.bias)), lab);
        opt.zero_grad();
        g.backward(loss);
        opt.step();
      }
      return std::vector<float>(lp.weight.data().begin(), lp.weight.data().end());
    };
    CHECK(run() == run());
  }
}

TEST_CASE("initialisation") {
  Rng a(1), b(1);
  Conv2dParams p = make_conv(4, 8, 3, a), q = make_conv(4, 8, 3, b);
  CHECK(std::equal(p.weight.data().begin(), p.weight.data().end(), q.weight.data().begin()));
  const double bound = std::sqrt(1.0 / 36);
  for (float v : p.weight.data()) CHECK(std::abs(v) <= bound);
  for (float v : p.bias.data()) CHECK(std::abs(v) <= bound);
  CHECK(p.weight.requires_grad());

  Rng c(1);
  Conv2dParams gained = make_conv(4, 8, 3, c, kReluGain);
  for (size_t i = 0; i < gained.weight.numel(); ++i)
    CHECK(gained.weight.at(i) == doctest::Approx(p.weight.at(i) * kReluGain).epsilon(1e-5));
}
