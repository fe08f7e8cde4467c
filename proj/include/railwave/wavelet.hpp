#pragma once

// Morlet continuous wavelet transform and scalogram feature images.

#include <complex>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "railwave/signal_core.hpp"

namespace railwave {

struct MorletParams {
  double omega0 = 6.0;  // central frequency, must be >= 5
};

/// Strictly increasing dilations, in samples.
struct ScaleGrid {
  std::vector<double> scales;

  std::size_t size() const { return scales.size(); }
};

/// Complex coefficients, row-major [n_scales x n_times]; row k belongs to scales[k].
struct Scalogram {
  std::vector<std::complex<double>> coefficients;
  ScaleGrid grid;
  std::size_t n_times = 0;
  double sample_rate_hz = 0.0;

  std::size_t n_scales() const { return grid.size(); }
  const std::complex<double>& at(std::size_t scale_row, std::size_t t) const {
    return coefficients[scale_row * n_times + t];
  }
};

inline constexpr std::size_t kImageSize = 64;

/// Normalized magnitude image, row-major, values in [0, 1].
struct FeatureImage {
  std::vector<float> pixels;
  std::size_t height = 0;
  std::size_t width = 0;
  FaultClass label = FaultClass::from_id(0);

  float at(std::size_t r, std::size_t c) const { return pixels[r * width + c]; }
};

/// pi^(-1/4) * exp(i*omega0*t) * exp(-t^2/2)
std::complex<double> morlet_sample(double t, const MorletParams& params);

/// Log-spaced pseudo-frequencies from f_max down to f_min, mapped to increasing scales.
ScaleGrid make_scale_grid(double f_min_hz, double f_max_hz, std::size_t n_scales, double rate_hz,
                          const MorletParams& params);

/// omega0 * rate / (2*pi*scale)
double pseudo_frequency(double scale, double rate_hz, const MorletParams& params);

/// W(a,b) = a^(-1/2) * sum_t x[t] * conj(psi((t-b)/a)) for b in [0, length).
/// Evaluated by FFT with zero padding wide enough that no wavelet tail wraps onto the segment.
Scalogram cwt(std::span<const double> samples, double sample_rate_hz, const ScaleGrid& grid,
              const MorletParams& params);
Scalogram cwt(const Segment& segment, const ScaleGrid& grid, const MorletParams& params);

/// |W| area-averaged to out_h x out_w, then min-max normalized. Constant input gives all zeros.
FeatureImage scalogram_to_image(const Scalogram& s, std::size_t out_h = kImageSize, std::size_t out_w = kImageSize);

/// Area-averaged resize of a row-major matrix; each output cell is the mean of its source rectangle.
std::vector<double> area_resize(std::span<const double> src, std::size_t src_h, std::size_t src_w, std::size_t out_h,
                                std::size_t out_w);

std::vector<std::uint8_t> encode_image(const FeatureImage& img);
FeatureImage decode_image(std::span<const std::uint8_t> bytes);
void save_image(const std::string& path, const FeatureImage& img);
FeatureImage load_image(const std::string& path);

/// 8-bit binary PGM for eyeballing; never read back.
void export_pgm(const std::string& path, const FeatureImage& img);

}  // namespace railwave
