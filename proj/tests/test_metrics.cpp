#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "darn/errors.hpp"
#include "darn/metrics.hpp"
#include "darn/report.hpp"
#include "oracles.hpp"

using namespace darn;
namespace m = darn::metrics;

TEST_CASE("optimal scale") {
  const Image gt = oracle::random_image(2, 2, 1, 0.1, 1.0);
  CHECK(m::optimal_scale(gt, scaled(gt, 0.5)) == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(m::optimal_scale(gt, gt) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK_THROWS_AS(m::optimal_scale(gt, Image(2, 2, 0.0)), NumericError);

  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Image g = oracle::random_image(2, 2, seed, -1.0, 1.0), p = oracle::random_image(2, 2, seed + 50, -1.0, 1.0);
    double best = INFINITY, best_a = 0.0;
    for (long i = -100000; i <= 100000; ++i) {
      const double a = i * 1e-4;
      const double r = oracle::residual(g, p, a);
      if (r < best) best = r, best_a = a;
    }
    const double a = m::optimal_scale(g, p);
    if (std::abs(a) < 10.0) CHECK(std::abs(a - best_a) < 1e-3);
  }
}

TEST_CASE("si-MSE") {
  const Image gt = oracle::random_image(6, 5, 2);
  CHECK(m::si_mse(gt, gt) == 0.0);
  for (double k : {-3.0, 0.25, 7.0}) CHECK(m::si_mse(gt, scaled(gt, k)) < 1e-30);

  Image g2(1, 2), p2(1, 2);
  const double gv[] = {1.0, 0.0, 0.5, 0.2, 0.4, 0.9}, pv[] = {0.5, 0.5, 0.5, 0.1, 0.9, 0.3};
  for (std::size_t i = 0; i < 6; ++i) g2.data()[i] = gv[i], p2.data()[i] = pv[i];
  CHECK(m::si_mse(g2, p2) == doctest::Approx(oracle::si_mse_sweep(g2, p2)).epsilon(1e-9));

  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Image g = oracle::random_image(8, 8, seed), p = oracle::random_image(8, 8, seed + 100);
    CHECK(std::abs(m::si_mse(g, p) - oracle::si_mse_sweep(g, p)) < 1e-6);
    const double base = m::si_mse(g, p);
    for (double k : {0.5, 2.0, 10.0}) CHECK(std::abs(m::si_mse(g, scaled(p, k)) - base) <= 1e-10 * base);
    CHECK(m::mse(g, p) >= base);
  }
}

TEST_CASE("MSE") {
  const Image gt(4, 4, 0.5);
  CHECK(m::mse(gt, gt) == 0.0);
  CHECK(m::mse(gt, scaled(gt, 2.0)) == doctest::Approx(0.75).epsilon(1e-15));
  const Image g = oracle::random_image(5, 7, 3), p = oracle::random_image(5, 7, 4);
  CHECK(m::mse(g, p) == doctest::Approx(oracle::residual(g, p, 1.0) / 35.0).epsilon(1e-13));
}

TEST_CASE("patch grid") {
  CHECK(m::patch_grid(100, 100).size() == 361);
  CHECK(m::patch_grid(100, 80).size() == 285);
  for (const auto& w : m::patch_grid(100, 100)) CHECK(w.side == 10);

  std::mt19937_64 rng(11);
  std::uniform_int_distribution<std::size_t> d(3, 140);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t H = d(rng), W = d(rng);
    const auto grid = m::patch_grid(H, W);
    const auto ref = oracle::windows(H, W);
    REQUIRE(grid.size() == ref.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
      CHECK(grid[i].y == ref[i].y);
      CHECK(grid[i].x == ref[i].x);
      CHECK(grid[i].side == ref[i].side);
    }
    std::vector<int> covered(H * W, 0);
    for (const auto& w : grid) {
      CHECK(w.y + w.side <= H);
      CHECK(w.x + w.side <= W);
      for (std::size_t y = w.y; y < w.y + w.side; ++y)
        for (std::size_t x = w.x; x < w.x + w.side; ++x) covered[y * W + x] = 1;
    }
    CAPTURE(H);
    CAPTURE(W);
    CHECK(std::count(covered.begin(), covered.end(), 0) == 0);
  }
}

TEST_CASE("si-LMSE") {
  const Image gt = oracle::random_image(20, 20, 5, 0.1, 1.0);
  CHECK(m::si_lmse(gt, gt) == 0.0);

  // 20x20: side 2, stride 1, so only a uniform factor is free of overlap effects.
  CHECK(m::si_lmse(gt, scaled(gt, 3.0)) < 1e-30);

  // 40x40 has side 4 and stride 2; per-window factors on disjoint aligned
  // blocks of side 4 leave those windows exact.
  const Image big = oracle::random_image(40, 40, 6, 0.1, 1.0);
  Image pred = big;
  for (std::size_t y = 0; y < 40; ++y)
    for (std::size_t x = 0; x < 40; ++x)
      for (std::size_t c = 0; c < 3; ++c) pred.at(y, x, c) *= 1.0 + static_cast<double>((y / 4) * 10 + x / 4) * 0.1;
  for (const auto& w : m::patch_grid(40, 40)) {
    if (w.y % 4 == 0 && w.x % 4 == 0) {
      CHECK(m::si_mse(big.crop(w.y, w.x, w.side, w.side), pred.crop(w.y, w.x, w.side, w.side)) < 1e-28);
    }
  }

  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Image g = oracle::random_image(8, 8, seed), p = oracle::random_image(8, 8, seed + 300);
    CHECK(std::abs(m::si_lmse(g, p) - oracle::si_lmse_sweep(g, p)) < 1e-6);
    const Image g2 = oracle::random_image(23, 31, seed), p2 = oracle::random_image(23, 31, seed + 300);
    CHECK(std::abs(m::si_lmse(g2, p2) - oracle::si_lmse_sweep(g2, p2)) < 1e-6);
  }

  Image zero_pred = oracle::random_image(10, 10, 7);
  for (std::size_t c = 0; c < 3; ++c) zero_pred.at(0, 0, c) = 0.0;
  CHECK(std::isfinite(m::si_lmse(oracle::random_image(10, 10, 8), zero_pred)));
  CHECK(m::si_lmse(Image(10, 10, 0.5), Image(10, 10, 0.0)) == doctest::Approx(0.75));
}

TEST_CASE("SSIM") {
  const Image x = oracle::random_image(16, 16, 1);
  CHECK(std::abs(m::ssim(x, x) - 1.0) <= 1e-12);
  CHECK(m::dssim(x, x) == doctest::Approx(0.0).epsilon(1e-12));

  for (double c1 : {0.1, 0.5}) {
    for (double c2 : {0.3, 0.9}) {
      const double C1 = 1e-4;
      const double expected = (2 * c1 * c2 + C1) / (c1 * c1 + c2 * c2 + C1);
      CHECK(std::abs(m::ssim(Image(13, 17, c1), Image(13, 17, c2)) - expected) <= 1e-10);
    }
  }

  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Image a = oracle::random_image(18, 21, seed), b = oracle::random_image(18, 21, seed + 7);
    CHECK(std::abs(m::ssim(a, b) - oracle::ssim_direct(a, b)) <= 1e-5);
    CHECK(std::abs(m::dssim(a, b) - m::dssim(b, a)) <= 1e-12);
    const double d = m::dssim(a, b);
    CHECK(d >= 0.0);
    CHECK(d <= 1.0);
  }

  const Image small = oracle::random_image(6, 8, 3);
  CHECK(std::isfinite(m::ssim(small, oracle::random_image(6, 8, 4))));
  CHECK(std::abs(m::ssim(small, small) - 1.0) <= 1e-12);
}

TEST_CASE("relative scale") {
  const Image A = oracle::random_image(6, 6, 1, 0.1, 0.9), S = oracle::random_image(6, 6, 2, 0.2, 1.0);
  const auto same = m::solve_relative_scale(A, A, S, S);
  CHECK(same.alpha == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(m::rs_mse(A, A, S, S) <= 1e-20);

  const auto half = m::solve_relative_scale(A, scaled(A, 0.5), S, scaled(S, 2.0));
  CHECK(half.alpha == doctest::Approx(2.0).epsilon(1e-10));
  for (double a : {0.5, 1.0, 3.0}) CHECK(m::rs_mse(A, scaled(A, a), S, scaled(S, 1.0 / a)) <= 1e-10);

  const double inconsistent = m::rs_mse(A, scaled(A, 2.0), S, scaled(S, 2.0));
  CHECK(inconsistent > 0.0);
  CHECK(inconsistent == doctest::Approx(oracle::rs_mse_sweep(A, scaled(A, 2.0), S, scaled(S, 2.0))).epsilon(1e-8));

  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Image a = oracle::random_image(8, 8, seed), ah = oracle::random_image(8, 8, seed + 1);
    const Image s = oracle::random_image(8, 8, seed + 2), sh = oracle::random_image(8, 8, seed + 3, 0.1, 1.0);
    const double v = m::rs_mse(a, ah, s, sh);
    double alpha = 0.0;
    CHECK(std::abs(v - oracle::rs_mse_sweep(a, ah, s, sh, 1000000, &alpha)) < 1e-6);
    CHECK(m::solve_relative_scale(a, ah, s, sh).alpha == doctest::Approx(alpha).epsilon(1e-4));
    for (double g : {0.1, 0.5, 4.0}) CHECK(std::abs(m::rs_mse(a, scaled(ah, g), s, scaled(sh, 1.0 / g)) - v) <= 1e-8);
  }

  // Optimum far outside the bracket: alpha is pinned to the edge and flagged.
  const auto edge = m::solve_relative_scale(A, scaled(A, 1e-5), S, scaled(S, 1e5));
  CHECK(edge.at_bracket_edge);
  CHECK(edge.alpha == doctest::Approx(m::kScaleBracketMax));
}

TEST_CASE("report and baselines") {
  std::vector<Sample> samples;
  for (int i = 0; i < 3; ++i) {
    Sample s;
    s.id = "s" + std::to_string(i);
    s.albedo = oracle::random_image(12, 12, i, 0.1, 0.9);
    s.shading = Image(12, 12, 0.6);
    s.image = multiply(s.albedo, s.shading);
    samples.push_back(s);
  }
  const auto report = baseline_constant(ConstantComponent::shading, samples);
  CHECK(report.count() == 3);
  CHECK(report.aggregate.si_mse.average() == doctest::Approx(0.0));
  CHECK(report.aggregate.mse.average() == doctest::Approx(0.0));
  CHECK(report.aggregate.rs_mse == doctest::Approx(0.0));
  CHECK(report.aggregate.dssim.average() == doctest::Approx(0.0));
  const auto other = baseline_constant(ConstantComponent::albedo, samples);
  CHECK(other.aggregate.si_mse.albedo > 0.0);

  const auto row = evaluate_prediction("x", samples[0].albedo, samples[0].shading, samples[0].albedo, samples[0].shading);
  CHECK(row.si_mse.average() == 0.0);
  CHECK(row.rs_mse == 0.0);
  CHECK(row.dssim.average() == doctest::Approx(0.0).epsilon(1e-12));

  const auto avg = average_reports(report, other);
  CHECK(avg.aggregate.si_mse.albedo == doctest::Approx((report.aggregate.si_mse.albedo + other.aggregate.si_mse.albedo) / 2));
  CHECK(avg.aggregate.rs_mse == doctest::Approx((report.aggregate.rs_mse + other.aggregate.rs_mse) / 2));

  std::ostringstream csv;
  write_report_csv(csv, other);
  const std::string text = csv.str();
  const std::string header = text.substr(0, text.find('\n'));
  for (const char* col : {"image_id", "si_mse_A", "si_mse_S", "si_lmse_A", "si_lmse_S", "dssim_A", "dssim_S", "mse_A", "mse_S",
                          "rs_mse", "si_mse_A_raw", "rs_mse_raw"}) {
    CHECK(header.find(col) != std::string::npos);
  }
  CHECK(std::count(text.begin(), text.end(), '\n') == 5);
  CHECK(text.find("\nmean,") != std::string::npos);
}
