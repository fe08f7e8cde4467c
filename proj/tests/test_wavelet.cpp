#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>
#include <numbers>
#include <random>

#include "railwave/error.hpp"
#include "railwave/wavelet.hpp"
#include "test_support.hpp"
#include "wavelet_oracle.hpp"

using namespace railwave;
using cd = std::complex<double>;

namespace {

std::vector<double> random_signal(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0.0, 1.0);
  std::vector<double> x(n);
  for (auto& v : x) v = d(rng);
  return x;
}

std::vector<double> tone(double f, double rate, std::size_t n, double phase = 0.0) {
  std::vector<double> x(n);
  for (std::size_t t = 0; t < n; ++t) x[t] = std::sin(2.0 * std::numbers::pi * f * static_cast<double>(t) / rate + phase);
  return x;
}

double frob(const std::vector<cd>& a) {
  double s = 0;
  for (const auto& v : a) s += std::norm(v);
  return std::sqrt(s);
}

double rel_frob_diff(const std::vector<cd>& a, const std::vector<cd>& b) {
  std::vector<cd> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  return frob(d) / std::max(frob(b), 1e-300);
}

Scalogram constant_scalogram(std::size_t h, std::size_t w, cd value) {
  Scalogram s;
  s.grid.scales.resize(h);
  for (std::size_t k = 0; k < h; ++k) s.grid.scales[k] = 1.0 + static_cast<double>(k);
  s.n_times = w;
  s.sample_rate_hz = 1000.0;
  s.coefficients.assign(h * w, value);
  return s;
}

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::BadConfig;
}

}  // namespace

TEST_CASE("morlet closed form") {
  const double c = std::pow(std::numbers::pi, -0.25);
  CHECK(c == doctest::Approx(0.7511255).epsilon(1e-7));
  for (double w0 : {5.0, 6.0, 9.5}) {
    const cd v = morlet_sample(0.0, {w0});
    CHECK(v.real() == doctest::Approx(c).epsilon(1e-15));
    CHECK(v.imag() == 0.0);
  }
  CHECK(std::abs(morlet_sample(1.3, {6.0})) == doctest::Approx(std::abs(morlet_sample(-1.3, {6.0}))).epsilon(1e-15));
  const cd expect = c * std::exp(-0.5) * cd(std::cos(6.0), std::sin(6.0));
  const cd got = morlet_sample(1.0, {6.0});
  CHECK(std::abs(got - expect) < 1e-15);
}

TEST_CASE("scale grid") {
  const MorletParams p{6.0};
  SUBCASE("two points span the requested ratio") {
    const double r = 7.5;
    const auto g = make_scale_grid(100.0, 100.0 * r, 2, 64000.0, p);
    REQUIRE(g.size() == 2);
    CHECK(g.scales[1] / g.scales[0] == doctest::Approx(r).epsilon(1e-12));
  }
  SUBCASE("64 scales, strictly increasing, log-spaced pseudo-frequencies") {
    const auto g = make_scale_grid(50.0, 16000.0, 64, 64000.0, p);
    REQUIRE(g.size() == 64);
    for (std::size_t k = 1; k < g.size(); ++k) CHECK(g.scales[k] > g.scales[k - 1]);
    for (std::size_t k = 0; k < g.size(); ++k) {
      const double want = 16000.0 * std::pow(50.0 / 16000.0, static_cast<double>(k) / 63.0);
      const double inverted = 6.0 * 64000.0 / (2.0 * std::numbers::pi * g.scales[k]);
      CHECK(std::abs(inverted - want) / want < 1e-9);
      CHECK(std::abs(pseudo_frequency(g.scales[k], 64000.0, p) - want) / want < 1e-9);
    }
  }
  SUBCASE("errors") {
    CHECK(code_of([&] { make_scale_grid(0.0, 100.0, 4, 1000.0, p); }) == ErrorCode::BadBand);
    CHECK(code_of([&] { make_scale_grid(200.0, 100.0, 4, 1000.0, p); }) == ErrorCode::BadBand);
    CHECK(code_of([&] { make_scale_grid(10.0, 100.0, 1, 1000.0, p); }) == ErrorCode::BadBand);
    CHECK(code_of([&] { make_scale_grid(10.0, 600.0, 4, 1000.0, p); }) == ErrorCode::NyquistExceeded);
    CHECK(code_of([&] { make_scale_grid(10.0, 100.0, 4, 1000.0, {4.0}); }) == ErrorCode::BadParams);
  }
}

TEST_CASE("cwt matches the direct double sum") {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 5; ++trial) {
    const std::size_t n = 64 + 61 * static_cast<std::size_t>(trial);
    const auto x = random_signal(n, rng());
    const auto grid = make_scale_grid(300.0, 20000.0, 12, 64000.0, {6.0});
    const auto fast = cwt(x, 64000.0, grid, {6.0});
    CHECK(fast.n_times == n);
    CHECK(fast.n_scales() == 12);
    CHECK(rel_frob_diff(fast.coefficients, oracle::direct_cwt(x, grid.scales, 6.0)) < 1e-9);
  }
}

TEST_CASE("cwt of zeros is zero and cwt is linear") {
  const auto grid = make_scale_grid(100.0, 20000.0, 16, 64000.0, {6.0});
  const auto zeros = cwt(std::vector<double>(256, 0.0), 64000.0, grid, {6.0});
  for (const auto& v : zeros.coefficients) CHECK(v == cd(0.0, 0.0));

  const auto x = random_signal(300, 1), y = random_signal(300, 2);
  std::vector<double> scaled(x.size()), sum(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    scaled[i] = 2.5 * x[i];
    sum[i] = x[i] + y[i];
  }
  const auto wx = cwt(x, 64000.0, grid, {6.0}).coefficients;
  const auto wy = cwt(y, 64000.0, grid, {6.0}).coefficients;
  auto ws = cwt(scaled, 64000.0, grid, {6.0}).coefficients;
  auto wsum = cwt(sum, 64000.0, grid, {6.0}).coefficients;
  std::vector<cd> expect_scaled(wx.size()), expect_sum(wx.size());
  for (std::size_t i = 0; i < wx.size(); ++i) {
    expect_scaled[i] = 2.5 * wx[i];
    expect_sum[i] = wx[i] + wy[i];
  }
  CHECK(rel_frob_diff(ws, expect_scaled) < 1e-12);
  CHECK(rel_frob_diff(wsum, expect_sum) < 1e-10);
}

TEST_CASE("cwt is covariant under a time shift of a zero-tailed signal") {
  // Zero padding makes this a linear (not wrap-around) shift: columns move right by k while the
  // signal's support stays inside the segment.
  const std::size_t n = 512;
  auto x = random_signal(n, 9);
  for (std::size_t t = 3 * n / 4; t < n; ++t) x[t] = 0.0;
  const auto grid = make_scale_grid(500.0, 20000.0, 10, 64000.0, {6.0});
  const auto w = cwt(x, 64000.0, grid, {6.0});
  for (std::size_t k : {1, 17, 64, 128}) {
    std::vector<double> shifted(n, 0.0);
    std::copy(x.begin(), x.end() - static_cast<std::ptrdiff_t>(k), shifted.begin() + static_cast<std::ptrdiff_t>(k));
    const auto ws = cwt(shifted, 64000.0, grid, {6.0});
    double worst = 0.0, scale = 0.0;
    for (std::size_t r = 0; r < grid.size(); ++r)
      for (std::size_t b = k; b < n; ++b) {
        worst = std::max(worst, std::abs(ws.at(r, b) - w.at(r, b - k)));
        scale = std::max(scale, std::abs(w.at(r, b - k)));
      }
    CHECK(worst / scale < 1e-6);
  }
}

TEST_CASE("cwt is bit-for-bit repeatable") {
  const auto x = random_signal(1000, 5);
  const auto grid = make_scale_grid(50.0, 28800.0, 64, 64000.0, {6.0});
  const auto a = cwt(x, 64000.0, grid, {6.0});
  const auto b = cwt(x, 64000.0, grid, {6.0});
  CHECK(std::memcmp(a.coefficients.data(), b.coefficients.data(), a.coefficients.size() * sizeof(cd)) == 0);
}

TEST_CASE("500 Hz tone peaks at the nearest grid row") {
  const double rate = 64000.0;
  const auto grid = make_scale_grid(50.0, 4000.0, 40, rate, {6.0});
  const auto w = cwt(tone(500.0, rate, 6400), rate, grid, {6.0});
  std::size_t best = 0, nearest = 0;
  double best_mean = -1.0;
  for (std::size_t r = 0; r < grid.size(); ++r) {
    double m = 0;
    for (std::size_t b = 0; b < w.n_times; ++b) m += std::abs(w.at(r, b));
    if (m > best_mean) best_mean = m, best = r;
    if (std::abs(pseudo_frequency(grid.scales[r], rate, {6.0}) - 500.0) <
        std::abs(pseudo_frequency(grid.scales[nearest], rate, {6.0}) - 500.0))
      nearest = r;
  }
  CHECK(best == nearest);
}

TEST_CASE("cwt errors") {
  const auto grid = make_scale_grid(100.0, 2000.0, 4, 8000.0, {6.0});
  CHECK(code_of([&] { cwt(std::vector<double>(7, 1.0), 8000.0, grid, {6.0}); }) == ErrorCode::SegmentTooShort);
  std::vector<double> bad(64, 0.0);
  bad[3] = std::nan("");
  CHECK(code_of([&] { cwt(bad, 8000.0, grid, {6.0}); }) == ErrorCode::NonFiniteInput);
}

TEST_CASE("area resize matches a per-pixel overlap oracle and conserves mass") {
  const std::size_t h = 128, w = 200;
  const auto src = random_signal(h * w, 77);
  const auto out = area_resize(src, h, w, 64, 64);
  const auto expect = oracle::area_resize(src, h, w, 64, 64);
  REQUIRE(out.size() == expect.size());
  for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i] == doctest::Approx(expect[i]).epsilon(1e-12));
  double in_mean = 0, out_mean = 0;
  for (double v : src) in_mean += v;
  for (double v : out) out_mean += v;
  CHECK(std::abs(in_mean / static_cast<double>(src.size()) - out_mean / static_cast<double>(out.size())) < 1e-9);

  // Upsampling and odd ratios go through the same oracle.
  for (auto [oh, ow] : {std::pair<std::size_t, std::size_t>{7, 3}, {300, 13}, {1, 1}}) {
    const auto a = area_resize(src, h, w, oh, ow);
    const auto b = oracle::area_resize(src, h, w, oh, ow);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));
  }
}

TEST_CASE("scalogram image normalization") {
  SUBCASE("constant magnitude maps to zeros") {
    const auto img = scalogram_to_image(constant_scalogram(64, 64, cd(0.6, 0.8)));
    CHECK(img.height == 64);
    CHECK(img.width == 64);
    for (float p : img.pixels) CHECK(p == 0.0f);
  }
  SUBCASE("single maximal cell") {
    auto s = constant_scalogram(64, 64, cd(1.0, 0.0));
    s.coefficients[5 * 64 + 9] = cd(0.0, 3.0);
    s.coefficients[40 * 64 + 2] = cd(0.5, 0.0);
    const auto img = scalogram_to_image(s);
    CHECK(img.at(5, 9) == 1.0f);
    CHECK(img.at(40, 2) == 0.0f);
    for (float p : img.pixels) CHECK((p >= 0.0f && p <= 1.0f));
  }
  SUBCASE("real scalogram spans [0, 1] exactly") {
    const auto grid = make_scale_grid(50.0, 28800.0, 64, 64000.0, {6.0});
    const auto img = scalogram_to_image(cwt(random_signal(1000, 3), 64000.0, grid, {6.0}));
    CHECK(*std::min_element(img.pixels.begin(), img.pixels.end()) == 0.0f);
    CHECK(*std::max_element(img.pixels.begin(), img.pixels.end()) == 1.0f);
  }
  SUBCASE("errors") {
    CHECK(code_of([] { scalogram_to_image(Scalogram{}); }) == ErrorCode::EmptyScalogram);
    CHECK(code_of([] { scalogram_to_image(constant_scalogram(4, 4, 1.0), 0, 3); }) == ErrorCode::BadParams);
  }
}

TEST_CASE("feature image file round trip") {
  railwave::testing::TempDir dir("img");
  FeatureImage img;
  img.height = 3;
  img.width = 5;
  img.label = FaultClass::from_id(11);
  for (int i = 0; i < 15; ++i) img.pixels.push_back(static_cast<float>(i) / 14.0f);
  save_image(dir.file("a.rwim"), img);
  const auto back = load_image(dir.file("a.rwim"));
  CHECK(back.height == 3);
  CHECK(back.width == 5);
  CHECK(back.label.id() == 11);
  CHECK(back.pixels == img.pixels);

  const auto bytes = encode_image(img);
  CHECK(bytes.size() == 20 + 15 * 4);
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "RWIM");
  export_pgm(dir.file("a.pgm"), img);
  CHECK(std::filesystem::file_size(dir.file("a.pgm")) > 15);
}
