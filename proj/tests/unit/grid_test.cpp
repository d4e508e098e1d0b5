#include <doctest.h>

#include "hitok/error.hpp"
#include "hitok/grid.hpp"
#include "hitok/kernels.hpp"
#include "oracles.hpp"

using namespace hitok;

TEST_CASE("area downsample matches the box-integral definition") {
  for (const auto& [src, dst] : {std::pair{8, 4}, {12, 5}, {7, 3}, {32, 4}, {5, 5}, {9, 1}}) {
    const LatentGrid g = oracle::random_grid(3, src, src, 10 + src * 7 + dst);
    const LatentGrid got = area_downsample(g, {dst, dst});
    CHECK(oracle::max_abs_diff(got, oracle::area(g, dst, dst)) < 1e-12);
  }
  // Non-square.
  const LatentGrid g = oracle::random_grid(2, 6, 10, 99);
  CHECK(oracle::max_abs_diff(area_downsample(g, {4, 3}), oracle::area(g, 4, 3)) < 1e-12);
}

TEST_CASE("area downsample of a 2x2 block is its mean") {
  LatentGrid g(1, 2, 2, std::vector<double>{1.0, 2.0, 3.0, 6.0});
  CHECK(area_downsample(g, {1, 1}).at(0, 0, 0) == doctest::Approx(3.0).epsilon(1e-15));
}

TEST_CASE("area downsample preserves channel means") {
  const LatentGrid g = oracle::random_grid(4, 24, 24, 5);
  const auto a = channel_means(g), b = channel_means(area_downsample(g, {7, 7}));
  for (std::size_t c = 0; c < a.size(); ++c) CHECK(std::abs(a[c] - b[c]) < 1e-12);
}

TEST_CASE("cubic kernel values") {
  for (double x : {0.0, 0.25, 0.5, 1.0, 1.3, 1.75, 2.0, 2.5, -0.6, -1.5})
    CHECK(cubic_kernel(x) == doctest::Approx(oracle::keys(x, -0.75)).epsilon(1e-14));
  CHECK(cubic_kernel(0.0) == 1.0);
  CHECK(cubic_kernel(1.0) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(cubic_kernel(0.5) == doctest::Approx(0.59375));  // (a+2)/8 - (a+3)/4 + 1 with a = -0.75
}

TEST_CASE("bicubic upsample matches direct evaluation") {
  for (const auto& [src, dst] : {std::pair{2, 4}, {4, 6}, {3, 8}, {8, 32}, {1, 4}}) {
    const LatentGrid g = oracle::random_grid(2, src, src, 200 + src * 13 + dst);
    CHECK(oracle::max_abs_diff(bicubic_upsample(g, {dst, dst}), oracle::cubic(g, dst, dst)) < 1e-12);
  }
}

TEST_CASE("bilinear upsample matches direct evaluation") {
  const LatentGrid g = oracle::random_grid(3, 5, 5, 7);
  CHECK(oracle::max_abs_diff(bilinear_upsample(g, {13, 13}), oracle::linear(g, 13, 13)) < 1e-12);
}

TEST_CASE("upsampling reproduces constants and same-size copies") {
  const LatentGrid c(2, 3, 3, -1.25);
  const LatentGrid cu = bicubic_upsample(c, {11, 11}), li = bilinear_upsample(c, {11, 11});
  for (double v : cu.values()) CHECK(std::abs(v + 1.25) < 1e-12);
  for (double v : li.values()) CHECK(std::abs(v + 1.25) < 1e-12);
  const LatentGrid g = oracle::random_grid(2, 4, 4, 3);
  CHECK(bicubic_upsample(g, {4, 4}) == g);
}

TEST_CASE("resampling direction is enforced") {
  const LatentGrid g = oracle::random_grid(1, 4, 4, 1);
  CHECK_THROWS_AS(area_downsample(g, {8, 8}), PreconditionError);
  CHECK_THROWS_AS(bicubic_upsample(g, {2, 2}), PreconditionError);
}

TEST_CASE("phi refinement is a zero-padded 3x3 correlation") {
  const int ch = 3;
  const LatentGrid g = oracle::random_grid(ch, 5, 6, 8);
  PhiParams phi = PhiParams::zero(ch);
  const auto w = oracle::gaussian(phi.weight.size() + phi.bias.size(), 9);
  std::copy(w.begin(), w.begin() + phi.weight.size(), phi.weight.begin());
  std::copy(w.begin() + phi.weight.size(), w.end(), phi.bias.begin());
  const LatentGrid got = phi_refine(g, phi);
  double err = 0.0;
  for (int o = 0; o < ch; ++o)
    for (int i = 0; i < 5; ++i)
      for (int j = 0; j < 6; ++j) {
        double acc = phi.bias[o];
        for (int c = 0; c < ch; ++c)
          for (int di = 0; di < 3; ++di)
            for (int dj = 0; dj < 3; ++dj) {
              const int y = i + di - 1, x = j + dj - 1;
              if (y >= 0 && y < 5 && x >= 0 && x < 6) acc += phi.w(o, c, di, dj) * g.at(c, y, x);
            }
        err = std::max(err, std::abs(acc - got.at(o, i, j)));
      }
  CHECK(err < 1e-12);
  CHECK(phi_refine(g, PhiParams::identity(ch)) == g);
  CHECK(PhiParams::identity(ch).is_identity());
  CHECK_FALSE(PhiParams::box(ch).is_identity());
}

TEST_CASE("serial and OpenMP kernels are bit-identical") {
  const LatentGrid g = oracle::random_grid(6, 19, 19, 11);
  for (int threads : {1, 2, 4}) {
    kernels::set_thread_count(threads);
    const ResampleTaps up = bicubic_taps(19, 40), down = area_taps(19, 7);
    LatentGrid a(6, 40, 40), b(6, 40, 40), c(6, 7, 7), d(6, 7, 7), e(6, 19, 19), f(6, 19, 19);
    kernels::serial::resample(g, up, up, a);
    kernels::parallel::resample(g, up, up, b);
    kernels::serial::resample(g, down, down, c);
    kernels::parallel::resample(g, down, down, d);
    kernels::serial::conv3x3(g, PhiParams::box(6), e);
    kernels::parallel::conv3x3(g, PhiParams::box(6), f);
    CHECK(a == b);
    CHECK(c == d);
    CHECK(e == f);
  }
  kernels::set_thread_count(1);
}

TEST_CASE("grid arithmetic and norms") {
  const LatentGrid a = oracle::random_grid(2, 3, 3, 1), b = oracle::random_grid(2, 3, 3, 2);
  const LatentGrid s = a + b;
  CHECK(oracle::max_abs_diff(s - b, a) < 1e-15);
  double sq = 0.0;
  for (double v : a.values()) sq += v * v;
  CHECK(frobenius_norm(a) == doctest::Approx(std::sqrt(sq)));
  CHECK(distance(a, a) == 0.0);
  CHECK_THROWS_AS(a + LatentGrid(2, 3, 4), PreconditionError);
}
