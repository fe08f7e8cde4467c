#pragma once

// Deterministic 17-class synthetic vibration dataset.
//
// Families (frequencies of harmonics are orders of the shaft rate `base_freq_hz`; the gear-mesh
// order is 50, i.e. 1 kHz at the default 20 Hz shaft):
//   TYPE0       healthy: shaft order 1 only
//   TYPE1-8     bearing-like impulse trains, rates log-spaced over [37, 157] Hz, each ringing
//               down at its own resonance in the 3-8 kHz band
//   TYPE9-12    gear-like harmonic patterns at 2x, 3x, 0.5x and a mix of mesh multiples
//   TYPE13-16   looseness-like amplitude modulation of the mesh tone at 30, 60, 120, 240 Hz
//
// The clean waveform of a class is fixed; samples differ only in their noise.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "railwave/signal_core.hpp"

namespace railwave {

inline constexpr int kSignatureTableVersion = 1;

struct SynthConfig {
  double sample_rate_hz = 64000.0;
  std::size_t segment_length = 6400;
  std::size_t samples_per_class = 30;
  double noise_sigma = 0.2;
  double base_freq_hz = 20.0;
  std::uint64_t master_seed = 1;
  double val_fraction = 0.2;
  double test_fraction = 0.2;

  void validate() const;
  friend bool operator==(const SynthConfig&, const SynthConfig&) = default;
};

struct Harmonic {
  double order;  // multiple of base_freq_hz
  double amplitude;
};

struct ImpulseTrain {
  double rate_hz;
  double decay_per_s;
  double resonance_hz;
  double amplitude;
};

struct Modulation {
  double rate_hz;
  double depth;
};

struct FaultSignature {
  FaultClass label;
  std::vector<Harmonic> harmonics;
  std::optional<ImpulseTrain> impulses;
  std::optional<Modulation> modulation;
};

/// The frozen table, one signature per class in id order.
const std::vector<FaultSignature>& signature_table();

/// Seed of sample `index` of class `label`; stable under adding classes or samples.
std::uint64_t sample_seed(std::uint64_t master_seed, FaultClass label, std::size_t index);

/// Clean signal scaled to unit RMS, plus white Gaussian noise of std `noise_sigma`.
Segment generate_sample(FaultClass label, std::size_t index, const SynthConfig& cfg);

/// Upper bound on |sample| for any generated segment under `cfg`.
double sample_bound(const SynthConfig& cfg);

/// Relative path of a sample inside a dataset directory.
std::string sample_relative_path(FaultClass label, std::size_t index);

/// Writes every sample under out_dir/signals and a stratified manifest to out_dir/manifest.csv.
DatasetManifest generate_dataset(const SynthConfig& cfg, const std::string& out_dir);

}  // namespace railwave
