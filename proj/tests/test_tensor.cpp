#include <doctest.h>

#include <cmath>

#include "darn/errors.hpp"
#include "darn/gradcheck.hpp"
#include "darn/ops.hpp"
#include "oracles.hpp"

using namespace darn;
namespace o = darn::ops;

namespace {

std::vector<double> vec(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

double max_diff(const std::vector<double>& a, const std::vector<double>& b) {
  REQUIRE(a.size() == b.size());
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// Gradient check of `fn` reduced through a fixed random projection.
void check_op(const std::function<Tensor(const std::vector<Tensor>&)>& fn, const std::vector<Shape>& shapes,
              std::uint64_t seeds = 10, double lo = -1.0, double hi = 1.0) {
  for (std::uint64_t seed = 0; seed < seeds; ++seed) {
    std::vector<Tensor> inputs;
    for (std::size_t i = 0; i < shapes.size(); ++i) inputs.push_back(oracle::random_tensor(shapes[i], 100 * seed + i, true, lo, hi));
    GradCheckOptions opts;
    opts.seed = seed;
    const auto report = finite_diff_check(
        [&](const std::vector<Tensor>& in) { return random_projection(fn(in), 7 + seed); }, inputs, opts);
    CAPTURE(seed);
    CAPTURE(report.max_rel_err);
    CHECK(report.pass);
  }
}

}  // namespace

TEST_CASE("shape and construction") {
  const auto t = Tensor::zeros({2, 3, 4});
  CHECK(t.numel() == 24);
  CHECK(shape_numel(t.shape()) == t.numel());
  CHECK_THROWS_AS(Tensor::from({2, 2}, {1.0, 2.0, 3.0}), ShapeError);
}

TEST_CASE("conv2d") {
  SUBCASE("delta kernel is the identity") {
    const auto in = oracle::random_tensor({1, 1, 3, 3}, 1);
    std::vector<double> k(9, 0.0);
    k[4] = 1.0;
    const auto out = o::conv2d(in, Tensor::from({1, 1, 3, 3}, k), Tensor::zeros({1}), 1);
    CHECK(vec(out) == vec(in));
  }
  SUBCASE("zero kernel gives zeros") {
    const auto out = o::conv2d(oracle::random_tensor({2, 3, 4, 5}, 2), Tensor::zeros({4, 3, 3, 3}), Tensor::zeros({4}), 1);
    CHECK(out.shape() == Shape{2, 4, 4, 5});
    for (double v : out.values()) CHECK(v == 0.0);
  }
  SUBCASE("ones kernel over 1..9") {
    std::vector<double> in{1, 2, 3, 4, 5, 6, 7, 8, 9};
    const auto out = o::conv2d(Tensor::from({1, 1, 3, 3}, in), Tensor::full({1, 1, 3, 3}, 1.0), Tensor::zeros({1}), 1);
    CHECK(out.values()[4] == 45.0);
    const auto ref = oracle::conv2d(in, 1, 1, 3, 3, std::vector<double>(9, 1.0), 1, 3, 3, {0.0}, 1);
    CHECK(max_diff(vec(out), ref) == 0.0);
  }
  SUBCASE("random maps match the nested-loop oracle") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const auto in = oracle::random_tensor({2, 3, 6, 7}, seed);
      const auto k = oracle::random_tensor({4, 3, 3, 3}, seed + 50);
      const auto b = oracle::random_tensor({4}, seed + 90);
      const auto out = o::conv2d(in, k, b, 1);
      CHECK(max_diff(vec(out), oracle::conv2d(vec(in), 2, 3, 6, 7, vec(k), 4, 3, 3, vec(b), 1)) < 1e-12);
      const auto k5 = oracle::random_tensor({2, 3, 5, 5}, seed + 70);
      const auto out5 = o::conv2d(in, k5, Tensor::zeros({2}), 2);
      CHECK(max_diff(vec(out5), oracle::conv2d(vec(in), 2, 3, 6, 7, vec(k5), 2, 5, 5, {0.0, 0.0}, 2)) < 1e-12);
    }
  }
  SUBCASE("channel mismatch") {
    CHECK_THROWS_AS(o::conv2d(Tensor::zeros({1, 2, 3, 3}), Tensor::zeros({1, 3, 3, 3}), Tensor::zeros({1}), 1), ShapeError);
  }
  SUBCASE("gradients") {
    check_op([](const auto& in) { return o::conv2d(in[0], in[1], in[2], 1); }, {{1, 2, 5, 5}, {3, 2, 3, 3}, {3}});
  }
}

TEST_CASE("batch_norm") {
  SUBCASE("constant input maps to beta") {
    auto stats = o::BatchNormStats::fresh(2);
    const auto out = o::batch_norm(Tensor::full({2, 2, 3, 3}, 0.7), Tensor::full({2}, 1.0), Tensor::zeros({2}),
                                   o::NormMode::train, stats);
    for (double v : out.values()) CHECK(std::abs(v) < 1e-12);
  }
  SUBCASE("per-channel statistics of a random batch") {
    auto stats = o::BatchNormStats::fresh(4);
    const auto in = oracle::random_tensor({2, 4, 5, 5}, 3, false, -2.0, 5.0);
    const auto out = o::batch_norm(in, Tensor::full({4}, 1.0), Tensor::zeros({4}), o::NormMode::train, stats);
    for (std::size_t c = 0; c < 4; ++c) {
      const auto m = oracle::channel_moments(vec(out), 2, 4, 25, c);
      CHECK(std::abs(m.mean) < 1e-5);
      CHECK(std::abs(m.var - 1.0) < 1e-3);
      const auto raw = oracle::channel_moments(vec(in), 2, 4, 25, c);
      CHECK(stats.mean[c] == doctest::Approx(raw.mean).epsilon(1e-12));
      CHECK(stats.var[c] == doctest::Approx(raw.var * 50.0 / 49.0).epsilon(1e-12));
    }
  }
  SUBCASE("normalized input is preserved") {
    auto stats = o::BatchNormStats::fresh(1);
    std::vector<double> v(16);
    for (std::size_t i = 0; i < 16; ++i) v[i] = (i % 2 ? 1.0 : -1.0);
    const auto out = o::batch_norm(Tensor::from({1, 1, 4, 4}, v), Tensor::full({1}, 1.0), Tensor::zeros({1}),
                                   o::NormMode::train, stats);
    CHECK(max_diff(vec(out), v) < 1e-5);
  }
  SUBCASE("running statistics") {
    auto stats = o::BatchNormStats::fresh(1);
    const Tensor g = Tensor::full({1}, 1.0), b = Tensor::zeros({1});
    CHECK_THROWS_AS(o::batch_norm(Tensor::full({1, 1, 2, 2}, 1.0), g, b, o::NormMode::eval, stats), NumericError);
    o::batch_norm(Tensor::from({1, 1, 2, 2}, {0, 0, 2, 2}), g, b, o::NormMode::train, stats);
    CHECK(stats.mean[0] == 1.0);
    o::batch_norm(Tensor::from({1, 1, 2, 2}, {3, 3, 3, 3}), g, b, o::NormMode::train, stats);
    CHECK(stats.mean[0] == doctest::Approx(0.9 * 1.0 + 0.1 * 3.0));
    const auto out = o::batch_norm(Tensor::full({1, 1, 1, 1}, stats.mean[0]), g, b, o::NormMode::eval, stats);
    CHECK(std::abs(out.item()) < 1e-12);
  }
  SUBCASE("gradients in train and eval mode") {
    check_op(
        [](const auto& in) {
          auto stats = o::BatchNormStats::fresh(3);
          return o::batch_norm(in[0], in[1], in[2], o::NormMode::train, stats, {1e-5, 0.9, false});
        },
        {{2, 3, 3, 3}, {3}, {3}});
    check_op(
        [](const auto& in) {
          auto stats = o::BatchNormStats::fresh(3);
          stats.mean = {0.1, -0.2, 0.3};
          stats.var = {0.5, 1.5, 2.0};
          stats.initialized = true;
          return o::batch_norm(in[0], in[1], in[2], o::NormMode::eval, stats);
        },
        {{2, 3, 3, 3}, {3}, {3}});
  }
}

TEST_CASE("elementwise") {
  const auto x = oracle::random_tensor({5}, 4, false, 0.5, 2.0);
  const auto ones = o::div(x, x);
  for (double v : ones.values()) CHECK(v == 1.0);
  CHECK(o::relu(Tensor::scalar(-3.0)).item() == 0.0);
  CHECK(o::relu(Tensor::scalar(2.5)).item() == 2.5);
  auto z = Tensor::scalar(0.0, true);
  const auto s = o::sigmoid(z);
  CHECK(s.item() == 0.5);
  s.backward();
  CHECK(z.grad()[0] == 0.25);
  CHECK_THROWS_AS(o::div(x, Tensor::full({5}, 1e-4)), NumericError);
  CHECK_THROWS_AS(o::add(x, Tensor::zeros({4})), ShapeError);
  CHECK_THROWS_AS(o::log(Tensor::scalar(0.0)), NumericError);
  CHECK(o::clamped_log(Tensor::scalar(0.0), 1e-7).item() == doctest::Approx(std::log(1e-7)));
  CHECK(o::softplus_shifted(Tensor::scalar(-50.0), 1e-3).item() == doctest::Approx(1e-3));

  check_op([](const auto& in) { return o::add(in[0], in[1]); }, {{2, 3}, {2, 3}});
  check_op([](const auto& in) { return o::sub(in[0], in[1]); }, {{2, 3}, {2, 3}});
  check_op([](const auto& in) { return o::mul(in[0], in[1]); }, {{2, 3}, {2, 3}});
  check_op([](const auto& in) { return o::div(in[0], o::add_scalar(in[1], 1.1), 0.1); }, {{2, 3}, {2, 3}});
  check_op([](const auto& in) { return o::scale(in[0], -2.5); }, {{4}});
  check_op([](const auto& in) { return o::add_scalar(in[0], 0.3); }, {{4}});
  check_op([](const auto& in) { return o::square(in[0]); }, {{4}});
  check_op([](const auto& in) { return o::log(in[0]); }, {{6}}, 10, 0.2, 2.0);
  check_op([](const auto& in) { return o::clamped_log(in[0], 1e-7); }, {{6}}, 10, 0.2, 2.0);
  check_op([](const auto& in) { return o::sigmoid(in[0]); }, {{6}}, 10, -4.0, 4.0);
  check_op([](const auto& in) { return o::relu(in[0]); }, {{12}});
  check_op([](const auto& in) { return o::softplus_shifted(in[0], 1e-3); }, {{6}}, 10, -4.0, 4.0);
}

TEST_CASE("max_pool2x2") {
  CHECK(o::max_pool2x2(Tensor::from({1, 1, 2, 2}, {1, 2, 3, 4})).item() == 4.0);
  SUBCASE("ties route to the first element in scan order") {
    auto x = Tensor::full({1, 1, 4, 4}, 2.0, true);
    const auto y = o::max_pool2x2(x);
    for (double v : y.values()) CHECK(v == 2.0);
    o::sum(y).backward();
    const auto g = x.grad();
    for (std::size_t yy = 0; yy < 4; ++yy)
      for (std::size_t xx = 0; xx < 4; ++xx) CHECK(g[yy * 4 + xx] == ((yy % 2 == 0 && xx % 2 == 0) ? 1.0 : 0.0));
  }
  SUBCASE("random maps match the loop oracle") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const auto x = oracle::random_tensor({1, 1, 8, 8}, seed);
      CHECK(vec(o::max_pool2x2(x)) == oracle::max_pool(vec(x), 1, 8, 8));
    }
  }
  SUBCASE("odd extents replicate the border") {
    const auto y = o::max_pool2x2(Tensor::from({1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9}));
    CHECK(y.shape() == Shape{1, 1, 2, 2});
    CHECK(vec(y) == std::vector<double>{5, 6, 8, 9});
  }
  CHECK_THROWS_AS(o::max_pool2x2(Tensor::zeros({1, 1, 1, 4})), ShapeError);
  check_op([](const auto& in) { return o::max_pool2x2(in[0]); }, {{1, 2, 4, 6}});
}

TEST_CASE("affine") {
  const auto x = Tensor::from({1, 2}, {1, 2});
  CHECK(vec(o::affine(x, Tensor::from({2, 2}, {1, 0, 0, 2}), Tensor::full({2}, 1.0))) == std::vector<double>{2, 5});
  const auto ident = o::affine(oracle::random_tensor({3, 2}, 5), Tensor::from({2, 2}, {1, 0, 0, 1}), Tensor::zeros({2}));
  CHECK(vec(ident) == vec(oracle::random_tensor({3, 2}, 5)));
  const auto bias_only = o::affine(oracle::random_tensor({3, 2}, 5), Tensor::zeros({2, 4}), Tensor::from({4}, {1, 2, 3, 4}));
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t k = 0; k < 4; ++k) CHECK(bias_only.values()[r * 4 + k] == k + 1.0);
  CHECK_THROWS_AS(o::affine(x, Tensor::zeros({3, 2}), Tensor::zeros({2})), ShapeError);
  check_op([](const auto& in) { return o::affine(in[0], in[1], in[2]); }, {{3, 4}, {4, 2}, {2}});
}

TEST_CASE("reductions and reshapes") {
  CHECK(o::mean(Tensor::full({3, 4}, 1.5)).item() == 1.5);
  auto x = Tensor::full({3, 4}, 1.0, true);
  o::mean(x).backward();
  for (double g : x.grad()) CHECK(g == doctest::Approx(1.0 / 12.0));
  auto y = Tensor::full({5}, 1.0, true);
  o::sum(y).backward();
  for (double g : y.grad()) CHECK(g == 1.0);
  check_op([](const auto& in) { return o::sum(in[0]); }, {{2, 3}});
  check_op([](const auto& in) { return o::mean(in[0]); }, {{2, 3}});
  check_op([](const auto& in) { return o::flatten(in[0]); }, {{2, 3, 2, 2}});
  check_op([](const auto& in) { return o::reshape(in[0], {3, 4}); }, {{2, 6}});
  check_op([](const auto& in) { return o::forward_diff(in[0], 2); }, {{1, 2, 4, 3}});
  check_op([](const auto& in) { return o::forward_diff(in[0], 3); }, {{1, 2, 4, 3}});
}

TEST_CASE("backward semantics") {
  auto x = Tensor::from({3}, {1, 2, 3}, true);
  o::mean(o::square(x)).backward();
  const auto g = x.grad();
  CHECK(g[0] == doctest::Approx(2.0 / 3.0));
  CHECK(g[1] == doctest::Approx(4.0 / 3.0));
  CHECK(g[2] == doctest::Approx(2.0));

  SUBCASE("accumulation is additive") {
    o::mean(o::square(x)).backward();
    CHECK(x.grad()[2] == doctest::Approx(4.0));
  }
  SUBCASE("detached loss leaves no gradient") {
    auto leaf = Tensor::from({3}, {1, 2, 3}, true);
    o::sum(o::square(leaf.detach())).backward();
    CHECK(!leaf.has_grad());
  }
  SUBCASE("non-scalar root") { CHECK_THROWS_AS(o::square(x).backward(), ShapeError); }
  SUBCASE("linearity") {
    auto a = oracle::random_tensor({6}, 11, true);
    auto l1 = [&] { return o::sum(o::square(a)); };
    auto l2 = [&] { return o::sum(o::sigmoid(a)); };
    l1().backward();
    const auto g1 = a.grad();
    a.zero_grad();
    l2().backward();
    const auto g2 = a.grad();
    a.zero_grad();
    o::add(o::scale(l1(), 2.0), o::scale(l2(), -3.0)).backward();
    const auto g = a.grad();
    for (std::size_t i = 0; i < 6; ++i) CHECK(g[i] == doctest::Approx(2.0 * g1[i] - 3.0 * g2[i]).epsilon(1e-12));
  }
  SUBCASE("no-grad guard records no graph") {
    NoGradGuard guard;
    const auto y = o::square(x);
    CHECK(!y.requires_grad());
  }
  SUBCASE("reverse topological order") {
    auto a = Tensor::scalar(2.0, true);
    const auto b = o::square(a);
    const auto c = o::add(b, o::scale(b, 3.0));
    const auto order = backward_order(c);
    REQUIRE(order.size() == 4);
    CHECK(order.front() == c.node().get());
    CHECK(order.back() == a.node().get());
  }
}

TEST_CASE("composite conv-bn-relu-mean chain") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::vector<Tensor> inputs{oracle::random_tensor({2, 2, 4, 4}, seed, true), oracle::random_tensor({3, 2, 3, 3}, seed + 1, true),
                               oracle::random_tensor({3}, seed + 2, true), oracle::random_tensor({3}, seed + 3, true, 0.5, 1.5),
                               oracle::random_tensor({3}, seed + 4, true)};
    GradCheckOptions opts;
    opts.seed = seed;
    const auto r = finite_diff_check(
        [](const std::vector<Tensor>& in) {
          auto stats = o::BatchNormStats::fresh(3);
          return o::mean(o::relu(o::batch_norm(o::conv2d(in[0], in[1], in[2], 1), in[3], in[4], o::NormMode::train, stats)));
        },
        inputs, opts);
    CAPTURE(r.max_rel_err);
    CHECK(r.pass);
  }
}

TEST_CASE("finite_diff_check reports") {
  const auto lin = finite_diff_check([](const auto& in) { return o::sum(o::scale(in[0], 3.0)); },
                                     {oracle::random_tensor({5}, 1, true)});
  CHECK(lin.pass);
  CHECK(lin.max_rel_err < 1e-9);
  const auto kinked = finite_diff_check([](const auto& in) { return o::sum(o::relu(in[0])); },
                                        {Tensor::from({3}, {0.0, 1.0, -1.0}, true)});
  CHECK(kinked.pass);
  CHECK(kinked.resamples >= 1);
  // Half the true gradient: sum(x * stop_grad(x)).
  const auto wrong = finite_diff_check([](const auto& in) { return o::sum(o::mul(in[0], in[0].detach())); },
                                       {oracle::random_tensor({6}, 2, true)});
  CHECK(!wrong.pass);
  CHECK(wrong.max_rel_err > 0.1);
  const auto slight = finite_diff_check(
      [](const auto& in) { return o::add(o::sum(o::square(in[0])), o::scale(o::sum(o::mul(in[0], in[0].detach())), 1e-3)); },
      {oracle::random_tensor({6}, 3, true)});
  CHECK(!slight.pass);
}

TEST_CASE("forward is bit-identical across runs") {
  auto run = [] {
    const auto in = oracle::random_tensor({2, 3, 8, 8}, 9);
    const auto k = oracle::random_tensor({5, 3, 3, 3}, 10);
    auto stats = o::BatchNormStats::fresh(5);
    return vec(o::max_pool2x2(o::relu(o::batch_norm(o::conv2d(in, k, Tensor::zeros({5}), 1), Tensor::full({5}, 1.0),
                                                    Tensor::zeros({5}), o::NormMode::train, stats))));
  };
  CHECK(run() == run());
}
