#include <doctest.h>

#include <cmath>

#include "darn/errors.hpp"
#include "darn/gradcheck.hpp"
#include "darn/losses.hpp"
#include "darn/model.hpp"
#include "oracles.hpp"

using namespace darn;

namespace {

Generator small_generator(std::uint64_t seed, Target target = Target::shading, std::size_t blocks = 2) {
  return Generator({4, blocks, target}, seed);
}

double product_error(const Image& image, const DecompositionPair& p) { return max_abs_diff(image, recompose(p)); }

std::vector<Tensor> tensors_of(const std::vector<NamedTensor>& params) {
  std::vector<Tensor> out;
  for (const auto& p : params) {
    Tensor t = p.tensor;
    out.push_back(t);
  }
  return out;
}

}  // namespace

TEST_CASE("generator product consistency") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto gen = small_generator(seed, seed % 2 ? Target::albedo : Target::shading);
    const Image img = oracle::random_image(9, 11, seed + 100);
    const auto out = gen.forward(to_tensor(img), {ops::NormMode::train, false});
    const DecompositionPair pair{to_images(out.albedo).front(), to_images(out.shading).front()};
    CHECK(product_error(img, pair) <= 1e-6);
    const Image& regressed = seed % 2 ? pair.albedo : pair.shading;
    for (double v : regressed.data()) CHECK(v >= kPositivityFloor);
  }
}

TEST_CASE("generator accepts any size") {
  auto gen = small_generator(1);
  gen.set_running_stats_initialized(true);
  const auto pair = gen.decompose(oracle::random_image(37, 53, 2), ops::NormMode::eval);
  CHECK(pair.albedo.height() == 37);
  CHECK(pair.albedo.width() == 53);
  CHECK(pair.shading.height() == 37);
  CHECK_THROWS_AS(gen.decompose(Image(2, 5, 0.5)), ShapeError);
  Image bad(4, 4, 0.5);
  bad.at(1, 1, 0) = NAN;
  CHECK_THROWS_AS(gen.decompose(bad), NumericError);
  auto fresh = small_generator(3);
  CHECK_THROWS(fresh.decompose(oracle::random_image(5, 5, 1), ops::NormMode::eval));
}

TEST_CASE("target modes are symmetric") {
  auto sh = small_generator(5, Target::shading);
  auto al = small_generator(5, Target::albedo);
  const Tensor img = to_tensor(oracle::random_image(6, 6, 9));
  const auto a = sh.forward(img, {ops::NormMode::train, false});
  const auto b = al.forward(img, {ops::NormMode::train, false});
  const auto va = a.shading.values(), vb = b.albedo.values();
  CHECK(std::vector<double>(va.begin(), va.end()) == std::vector<double>(vb.begin(), vb.end()));
}

TEST_CASE("translation equivariance in eval mode") {
  auto gen = small_generator(7);
  auto stats = gen.norm_stats();
  for (auto* s : stats) {
    for (std::size_t c = 0; c < s->mean.size(); ++c) {
      s->mean[c] = 0.05 * static_cast<double>(c);
      s->var[c] = 0.5 + 0.1 * static_cast<double>(c);
    }
    s->initialized = true;
  }
  const Image img = oracle::random_image(26, 26, 4);
  const std::size_t shift = 2, radius = 6;
  const Image shifted = img.crop(shift, shift, 24, 24);
  const auto full = gen.decompose(img.crop(0, 0, 26, 26));
  const auto moved = gen.decompose(shifted);
  double worst = 0.0;
  for (std::size_t y = radius; y < 24 - radius; ++y)
    for (std::size_t x = radius; x < 24 - radius; ++x)
      for (std::size_t c = 0; c < 3; ++c)
        worst = std::max(worst, std::abs(moved.shading.at(y, x, c) - full.shading.at(y + shift, x + shift, c)));
  CHECK(worst < 1e-12);
}

TEST_CASE("positivity map") {
  CHECK(positivity_map(Tensor::scalar(0.0)).item() == doctest::Approx(std::log(2.0) + 1e-3).epsilon(1e-14));
  CHECK(positivity_map(Tensor::scalar(-800.0)).item() == doctest::Approx(1e-3).epsilon(1e-12));
  std::vector<double> raw;
  for (int i = -1000; i <= 1000; ++i) raw.push_back(i * 0.01);
  const auto out = positivity_map(Tensor::from({raw.size()}, raw));
  for (std::size_t i = 1; i < raw.size(); ++i) CHECK(out.values()[i] > out.values()[i - 1]);
}

TEST_CASE("residual block") {
  auto gen = small_generator(11, Target::shading, 1);
  ResidualBlockParams& block = gen.blocks().front();

  SUBCASE("zeroed branch is the identity path") {
    for (Tensor t : {block.conv1.kernel, block.conv1.bias, block.conv2.kernel, block.conv2.bias, block.norm1.gamma,
                     block.norm1.beta, block.norm2.gamma, block.norm2.beta}) {
      for (auto& v : t.mutable_values()) v = 0.0;
    }
    const Tensor x = oracle::random_tensor({2, 4, 5, 5}, 3);
    const auto y = residual_block(x, block, {ops::NormMode::train, false});
    for (std::size_t i = 0; i < x.numel(); ++i) CHECK(y.values()[i] == std::max(0.0, x.values()[i]));

    Tensor xg = oracle::random_tensor({2, 4, 5, 5}, 4, true);
    const Tensor v = oracle::random_tensor({2, 4, 5, 5}, 5);
    ops::sum(ops::mul(residual_block(xg, block, {ops::NormMode::train, false}), v)).backward();
    const auto g = xg.grad();
    for (std::size_t i = 0; i < g.size(); ++i) CHECK(g[i] == (xg.values()[i] > 0.0 ? v.values()[i] : 0.0));
  }
  SUBCASE("channel mismatch") {
    CHECK_THROWS_AS(residual_block(Tensor::zeros({1, 3, 4, 4}), block, {}), ShapeError);
  }
  SUBCASE("gradients") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      auto g2 = small_generator(seed, Target::shading, 1);
      auto& b = g2.blocks().front();
      std::vector<Tensor> inputs{oracle::random_tensor({2, 4, 4, 4}, seed, true)};
      for (Tensor t : {b.conv1.kernel, b.conv1.bias, b.norm1.gamma, b.norm1.beta, b.conv2.kernel, b.conv2.bias,
                       b.norm2.gamma, b.norm2.beta}) {
        t.set_requires_grad(true);
        inputs.push_back(t);
      }
      GradCheckOptions opts;
      opts.seed = seed;
      const auto r = finite_diff_check(
          [&](const std::vector<Tensor>& in) {
            return random_projection(residual_block(in[0], b, {ops::NormMode::train, false}), seed);
          },
          inputs, opts);
      CAPTURE(r.max_rel_err);
      CHECK(r.pass);
    }
  }
}

TEST_CASE("two-block generator gradients through the full loss") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto gen = small_generator(seed);
    const Discriminator da({8, {4, 4}, 8}, seed + 1), ds({8, {4, 4}, 8}, seed + 2);
    const Image img = oracle::random_image(8, 8, seed + 3, 0.1, 1.0);
    const Image alb = oracle::random_image(8, 8, seed + 4, 0.1, 0.9);
    const Image sh = oracle::random_image(8, 8, seed + 5, 0.2, 1.0);
    const Tensor ti = to_tensor(img), ta = to_tensor(alb), ts = to_tensor(sh);
    GradCheckOptions opts;
    opts.seed = seed;
    const auto r = finite_diff_check(
        [&](const std::vector<Tensor>&) {
          const auto out = gen.forward(ti, {ops::NormMode::train, false});
          const auto adv = adversarial_loss(out.albedo, out.shading, da.frozen(), ds.frozen());
          return total_loss(data_loss(out.albedo, out.shading, ta, ts), gradient_loss(out.albedo, out.shading, ta, ts), adv,
                            0.1)
              .total;
        },
        tensors_of(gen.parameters()), opts);
    CAPTURE(seed);
    CAPTURE(r.max_rel_err);
    CHECK(r.pass);
  }
}

TEST_CASE("discriminator") {
  const Discriminator d({16, {16, 32, 64}, 64}, 3);
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const double p = d.probability(oracle::random_image(16, 16, seed));
    CHECK(p > 0.0);
    CHECK(p < 1.0);
  }
  const Image patch = oracle::random_image(16, 16, 5);
  CHECK(d.probability(patch) == d.probability(patch));
  CHECK_THROWS_AS(d.probability(oracle::random_image(12, 16, 5)), ShapeError);

  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Discriminator small({8, {4, 6}, 8}, seed);
    GradCheckOptions opts;
    opts.seed = seed;
    const auto r = finite_diff_check([&](const std::vector<Tensor>& in) { return ops::sum(small.forward(in[0])); },
                                     {oracle::random_tensor({2, 3, 8, 8}, seed, true, 0.0, 1.0)}, opts);
    CAPTURE(r.max_rel_err);
    CHECK(r.pass);
  }
}

TEST_CASE("frozen discriminator passes gradient to the patch only") {
  const Discriminator d({8, {4, 6}, 8}, 1);
  for (const auto& p : d.parameters()) CHECK(p.tensor.requires_grad());
  const Discriminator f = d.frozen();
  Tensor x = oracle::random_tensor({1, 3, 8, 8}, 2, true);
  ops::sum(f.forward(x)).backward();
  CHECK(x.has_grad());
  for (const auto& p : d.parameters()) CHECK(!p.tensor.has_grad());
  CHECK(f.forward(x).item() == d.forward(x).item());
}
