#include "railwave/wavelet.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <sstream>

#include "railwave/binary_io.hpp"
#include "railwave/error.hpp"

namespace railwave {

namespace {

constexpr std::string_view kImageMagic = "RWIM";
constexpr std::uint32_t kImageVersion = 1;
constexpr std::size_t kMinSegment = 8;
// exp(-8^2/2) ~ 1e-14: beyond this many scales the Gaussian envelope is below double rounding.
constexpr double kSupportInScales = 8.0;

struct FftwDeleter {
  void operator()(fftw_complex* p) const { fftw_free(p); }
};
using FftwBuffer = std::unique_ptr<fftw_complex[], FftwDeleter>;

FftwBuffer make_buffer(std::size_t n) {
  auto* p = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * n));
  if (p == nullptr) throw std::bad_alloc();
  return FftwBuffer(p);
}

struct PlanPair {
  fftw_plan forward;
  fftw_plan backward;
};

// Plans are created once per size under a lock and never mutated afterwards; executing them on
// other (equally aligned) buffers through the new-array interface is thread-safe.
PlanPair plans_for(std::size_t n) {
  static std::mutex mu;
  static std::map<std::size_t, PlanPair> cache;
  std::lock_guard lock(mu);
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  auto in = make_buffer(n);
  auto out = make_buffer(n);
  const int len = static_cast<int>(n);
  PlanPair p{fftw_plan_dft_1d(len, in.get(), out.get(), FFTW_FORWARD, FFTW_ESTIMATE),
             fftw_plan_dft_1d(len, in.get(), out.get(), FFTW_BACKWARD, FFTW_ESTIMATE)};
  cache.emplace(n, p);
  return p;
}

std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

void validate_grid(const ScaleGrid& grid) {
  if (grid.scales.empty()) throw Error(ErrorCode::BadBand, "empty scale grid");
  for (std::size_t k = 0; k < grid.scales.size(); ++k) {
    if (!(grid.scales[k] > 0.0) || !std::isfinite(grid.scales[k]))
      throw Error(ErrorCode::BadBand, "scale " + std::to_string(k) + " not positive");
    if (k > 0 && !(grid.scales[k] > grid.scales[k - 1]))
      throw Error(ErrorCode::BadBand, "scales not strictly increasing at " + std::to_string(k));
  }
}

void validate_params(const MorletParams& params) {
  if (!(params.omega0 >= 5.0) || !std::isfinite(params.omega0))
    throw Error(ErrorCode::BadParams, "omega0 must be >= 5, got " + std::to_string(params.omega0));
}

}  // namespace

std::complex<double> morlet_sample(double t, const MorletParams& params) {
  static const double norm = std::pow(std::numbers::pi, -0.25);
  const double envelope = norm * std::exp(-0.5 * t * t);
  const double phase = params.omega0 * t;
  return {envelope * std::cos(phase), envelope * std::sin(phase)};
}

double pseudo_frequency(double scale, double rate_hz, const MorletParams& params) {
  return params.omega0 * rate_hz / (2.0 * std::numbers::pi * scale);
}

ScaleGrid make_scale_grid(double f_min_hz, double f_max_hz, std::size_t n_scales, double rate_hz,
                          const MorletParams& params) {
  validate_params(params);
  if (!(rate_hz > 0.0) || !std::isfinite(rate_hz)) throw Error(ErrorCode::BadBand, "sample rate must be > 0");
  if (!(f_min_hz > 0.0) || !(f_min_hz < f_max_hz) || n_scales < 2)
    throw Error(ErrorCode::BadBand, "need 0 < f_min < f_max and at least 2 scales");
  if (f_max_hz > rate_hz / 2.0)
    throw Error(ErrorCode::NyquistExceeded,
                std::to_string(f_max_hz) + " Hz above Nyquist " + std::to_string(rate_hz / 2.0) + " Hz");

  ScaleGrid grid;
  grid.scales.resize(n_scales);
  const double log_max = std::log(f_max_hz);
  const double step = (std::log(f_min_hz) - log_max) / static_cast<double>(n_scales - 1);
  for (std::size_t k = 0; k < n_scales; ++k) {
    double f = std::exp(log_max + step * static_cast<double>(k));
    if (k == 0) f = f_max_hz;
    if (k + 1 == n_scales) f = f_min_hz;
    grid.scales[k] = params.omega0 * rate_hz / (2.0 * std::numbers::pi * f);
  }
  return grid;
}

Scalogram cwt(std::span<const double> samples, double sample_rate_hz, const ScaleGrid& grid,
              const MorletParams& params) {
  validate_params(params);
  validate_grid(grid);
  const std::size_t len = samples.size();
  if (len < kMinSegment) throw Error(ErrorCode::SegmentTooShort, std::to_string(len) + " samples");
  for (double v : samples)
    if (!std::isfinite(v)) throw Error(ErrorCode::NonFiniteInput, "segment contains NaN/Inf");

  auto half_support = [&](double a) {
    return std::min(static_cast<std::size_t>(std::ceil(kSupportInScales * a)), len - 1);
  };
  const std::size_t n = next_pow2(len + half_support(grid.scales.back()));
  const auto plans = plans_for(n);

  auto signal = make_buffer(n);
  auto spectrum = make_buffer(n);
  auto kernel = make_buffer(n);
  auto product = make_buffer(n);
  for (std::size_t i = 0; i < n; ++i) {
    signal[i][0] = i < len ? samples[i] : 0.0;
    signal[i][1] = 0.0;
  }
  fftw_execute_dft(plans.forward, signal.get(), spectrum.get());

  Scalogram out;
  out.grid = grid;
  out.n_times = len;
  out.sample_rate_hz = sample_rate_hz;
  out.coefficients.resize(grid.size() * len);

  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const double a = grid.scales[k];
    const double inv_sqrt_a = 1.0 / std::sqrt(a);
    const std::size_t m = half_support(a);
    // W[b] = sum_t x[t] g[t-b] with g[j] = conj(psi(j/a))/sqrt(a); as a circular convolution the
    // kernel is the reversed filter r[j] = g[-j], stored with negative lags wrapped to the end.
    std::fill_n(&signal[0][0], 2 * n, 0.0);
    for (std::size_t j = 0; j <= m; ++j) {
      const auto pos = std::conj(morlet_sample(-static_cast<double>(j) / a, params)) * inv_sqrt_a;
      signal[j][0] = pos.real();
      signal[j][1] = pos.imag();
      if (j == 0) continue;
      const auto neg = std::conj(morlet_sample(static_cast<double>(j) / a, params)) * inv_sqrt_a;
      signal[n - j][0] = neg.real();
      signal[n - j][1] = neg.imag();
    }
    fftw_execute_dft(plans.forward, signal.get(), kernel.get());
    for (std::size_t i = 0; i < n; ++i) {
      const double xr = spectrum[i][0], xi = spectrum[i][1];
      const double hr = kernel[i][0], hi = kernel[i][1];
      product[i][0] = xr * hr - xi * hi;
      product[i][1] = xr * hi + xi * hr;
    }
    fftw_execute_dft(plans.backward, product.get(), signal.get());
    auto* row = out.coefficients.data() + k * len;
    for (std::size_t b = 0; b < len; ++b) row[b] = {signal[b][0] * inv_n, signal[b][1] * inv_n};
  }
  return out;
}

Scalogram cwt(const Segment& segment, const ScaleGrid& grid, const MorletParams& params) {
  std::vector<double> x(segment.samples.begin(), segment.samples.end());
  return cwt(x, segment.sample_rate_hz, grid, params);
}

std::vector<double> area_resize(std::span<const double> src, std::size_t src_h, std::size_t src_w, std::size_t out_h,
                                std::size_t out_w) {
  // Weight of source cell s inside output cell o, for one axis; the output cell spans
  // [o*src/out, (o+1)*src/out) in source coordinates and the weights sum to that width.
  auto axis_weights = [](std::size_t src_n, std::size_t out_n) {
    std::vector<std::vector<std::pair<std::size_t, double>>> w(out_n);
    const double ratio = static_cast<double>(src_n) / static_cast<double>(out_n);
    for (std::size_t o = 0; o < out_n; ++o) {
      const double lo = static_cast<double>(o) * ratio;
      const double hi = static_cast<double>(o + 1) * ratio;
      auto first = static_cast<std::size_t>(std::floor(lo));
      for (std::size_t s = first; s < src_n && static_cast<double>(s) < hi; ++s) {
        const double overlap = std::min(hi, static_cast<double>(s + 1)) - std::max(lo, static_cast<double>(s));
        if (overlap > 0.0) w[o].emplace_back(s, overlap / ratio);
      }
    }
    return w;
  };
  const auto wr = axis_weights(src_h, out_h);
  const auto wc = axis_weights(src_w, out_w);

  std::vector<double> cols(src_h * out_w, 0.0);
  for (std::size_t r = 0; r < src_h; ++r)
    for (std::size_t o = 0; o < out_w; ++o) {
      double acc = 0.0;
      for (auto [s, w] : wc[o]) acc += w * src[r * src_w + s];
      cols[r * out_w + o] = acc;
    }
  std::vector<double> out(out_h * out_w, 0.0);
  for (std::size_t o = 0; o < out_h; ++o)
    for (auto [s, w] : wr[o])
      for (std::size_t c = 0; c < out_w; ++c) out[o * out_w + c] += w * cols[s * out_w + c];
  return out;
}

FeatureImage scalogram_to_image(const Scalogram& s, std::size_t out_h, std::size_t out_w) {
  if (s.n_scales() == 0 || s.n_times == 0 || s.coefficients.size() != s.n_scales() * s.n_times)
    throw Error(ErrorCode::EmptyScalogram, "scalogram has no coefficients");
  if (out_h == 0 || out_w == 0) throw Error(ErrorCode::BadParams, "output image must be at least 1x1");
  std::vector<double> mag(s.coefficients.size());
  for (std::size_t i = 0; i < mag.size(); ++i) {
    mag[i] = std::abs(s.coefficients[i]);
    if (!std::isfinite(mag[i])) throw Error(ErrorCode::NonFiniteInput, "scalogram contains NaN/Inf");
  }
  const auto resized = area_resize(mag, s.n_scales(), s.n_times, out_h, out_w);
  const auto [lo_it, hi_it] = std::minmax_element(resized.begin(), resized.end());
  const double lo = *lo_it, hi = *hi_it;

  FeatureImage img;
  img.height = out_h;
  img.width = out_w;
  img.pixels.assign(out_h * out_w, 0.0f);
  if (hi > lo) {
    const double span = hi - lo;
    for (std::size_t i = 0; i < resized.size(); ++i) img.pixels[i] = static_cast<float>((resized[i] - lo) / span);
  }
  return img;
}

std::vector<std::uint8_t> encode_image(const FeatureImage& img) {
  io::ByteWriter w;
  w.put_magic(kImageMagic);
  w.put_u32(kImageVersion);
  w.put_u32(static_cast<std::uint32_t>(img.height));
  w.put_u32(static_cast<std::uint32_t>(img.width));
  w.put_u32(static_cast<std::uint32_t>(img.label.id()));
  w.put_bytes(img.pixels.data(), img.pixels.size() * sizeof(float));
  return w.bytes();
}

FeatureImage decode_image(std::span<const std::uint8_t> bytes) {
  io::ByteReader r(bytes, ErrorCode::MalformedHeader);
  if (!r.match_magic(kImageMagic)) throw Error(ErrorCode::MalformedHeader, "bad image magic");
  if (r.get_u32() != kImageVersion) throw Error(ErrorCode::VersionMismatch, "unsupported image version");
  FeatureImage img;
  img.height = r.get_u32();
  img.width = r.get_u32();
  img.label = FaultClass::from_id(static_cast<int>(r.get_u32()));
  if (img.height == 0 || img.width == 0) throw Error(ErrorCode::MalformedHeader, "empty image");
  if (r.remaining() != img.height * img.width * sizeof(float))
    throw Error(ErrorCode::MalformedHeader, "image payload size does not match header");
  img.pixels.resize(img.height * img.width);
  r.get_bytes(img.pixels.data(), img.pixels.size() * sizeof(float));
  return img;
}

void save_image(const std::string& path, const FeatureImage& img) { io::write_file(path, encode_image(img)); }

FeatureImage load_image(const std::string& path) { return decode_image(io::read_file(path)); }

void export_pgm(const std::string& path, const FeatureImage& img) {
  std::ostringstream header;
  header << "P5\n" << img.width << ' ' << img.height << "\n255\n";
  io::ByteWriter w;
  w.put_bytes(header.str().data(), header.str().size());
  for (float p : img.pixels) w.put_u8(static_cast<std::uint8_t>(std::lround(std::clamp(p, 0.0f, 1.0f) * 255.0f)));
  io::write_file(path, w.bytes());
}

}  // namespace railwave
