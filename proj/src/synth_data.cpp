#include "railwave/synth_data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <random>

#include "railwave/error.hpp"

namespace railwave {

namespace {

constexpr double kMeshOrder = 50.0;
// Largest peak-to-RMS ratio any clean signature may reach; checked on every sample.
constexpr double kMaxCrest = 10.0;
// Noise draws are clipped at this many sigma so sample_bound() is a hard bound.
constexpr double kNoiseSigmas = 8.0;

std::vector<FaultSignature> build_table() {
  std::vector<FaultSignature> t;
  const Harmonic shaft{1.0, 1.0};
  const Harmonic shaft_faint{1.0, 0.5};
  t.push_back({FaultClass::from_id(0), {shaft}, std::nullopt, std::nullopt});

  for (int k = 0; k < 8; ++k) {
    const double x = static_cast<double>(k) / 7.0;
    // Slow ring-down and a strong burst keep adjacent impulse classes apart once
    // the scalogram is shrunk to a small image.
    ImpulseTrain imp{37.0 * std::pow(157.0 / 37.0, x), 400.0, 3000.0 * std::pow(8000.0 / 3000.0, x), 3.0};
    t.push_back({FaultClass::from_id(1 + k), {shaft_faint}, imp, std::nullopt});
  }

  const std::vector<std::vector<Harmonic>> patterns = {
      {shaft_faint, {2.0 * kMeshOrder, 1.0}},
      {shaft_faint, {3.0 * kMeshOrder, 1.0}},
      {shaft_faint, {0.5 * kMeshOrder, 1.0}},
      {shaft_faint, {kMeshOrder, 0.6}, {2.0 * kMeshOrder, 0.6}, {3.0 * kMeshOrder, 0.6}},
  };
  for (int k = 0; k < 4; ++k) t.push_back({FaultClass::from_id(9 + k), patterns[k], std::nullopt, std::nullopt});

  const double mod_rates[] = {30.0, 60.0, 120.0, 240.0};
  for (int k = 0; k < 4; ++k)
    t.push_back({FaultClass::from_id(13 + k), {shaft_faint, {kMeshOrder, 1.0}}, std::nullopt,
                 Modulation{mod_rates[k], 0.8}});
  return t;
}

double highest_frequency(const FaultSignature& s, double base_hz) {
  double f = 0.0;
  for (const auto& h : s.harmonics) f = std::max(f, h.order * base_hz);
  if (s.impulses) f = std::max({f, s.impulses->resonance_hz, s.impulses->rate_hz});
  if (s.modulation) f = std::max(f, s.modulation->rate_hz);
  return f;
}

}  // namespace

void SynthConfig::validate() const {
  if (!(sample_rate_hz > 0.0)) throw Error(ErrorCode::BadConfig, "sample_rate_hz must be positive");
  if (segment_length < 256) throw Error(ErrorCode::BadConfig, "segment_length must be at least 256");
  if (samples_per_class < 1) throw Error(ErrorCode::BadConfig, "samples_per_class must be at least 1");
  if (!(noise_sigma >= 0.0)) throw Error(ErrorCode::BadConfig, "noise_sigma must be non-negative");
  if (!(base_freq_hz > 0.0)) throw Error(ErrorCode::BadConfig, "base_freq_hz must be positive");
  for (const auto& s : signature_table())
    if (highest_frequency(s, base_freq_hz) >= sample_rate_hz / 2.0)
      throw Error(ErrorCode::BadConfig, s.label.name() + " has content above Nyquist at this rate/base frequency");
}

const std::vector<FaultSignature>& signature_table() {
  static const std::vector<FaultSignature> table = build_table();
  return table;
}

std::uint64_t sample_seed(std::uint64_t master_seed, FaultClass label, std::size_t index) {
  return mix_seed(mix_seed(master_seed, static_cast<std::uint64_t>(label.id())), static_cast<std::uint64_t>(index));
}

Segment generate_sample(FaultClass label, std::size_t index, const SynthConfig& cfg) {
  cfg.validate();
  const auto& sig = signature_table()[static_cast<std::size_t>(label.id())];
  constexpr double two_pi = 2.0 * std::numbers::pi;

  // The clean signature is fixed per class: zero phases and an impulse at t = 0.
  // Only the additive noise depends on the sample seed, which is what keeps
  // within-class scatter small relative to the gaps between classes.

  const std::size_t n = cfg.segment_length;
  const double dt = 1.0 / cfg.sample_rate_hz;
  std::vector<double> clean(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) * dt;
    double v = 0.0;
    for (std::size_t h = 0; h < sig.harmonics.size(); ++h)
      v += sig.harmonics[h].amplitude * std::sin(two_pi * sig.harmonics[h].order * cfg.base_freq_hz * t);
    if (sig.impulses) {
      const auto& imp = *sig.impulses;
      const double period = 1.0 / imp.rate_hz;
      // Include the impulse just before the window so its tail carries over.
      for (double onset = -period; onset <= t; onset += period) {
        const double tau = t - onset;
        if (tau < 0.0) continue;
        v += imp.amplitude * std::exp(-imp.decay_per_s * tau) * std::sin(two_pi * imp.resonance_hz * tau);
      }
    }
    if (sig.modulation)
      v *= 1.0 + sig.modulation->depth * std::sin(two_pi * sig.modulation->rate_hz * t);
    clean[i] = v;
  }

  double sq = 0.0, peak = 0.0;
  for (double v : clean) {
    sq += v * v;
    peak = std::max(peak, std::abs(v));
  }
  const double rms = std::sqrt(sq / static_cast<double>(n));
  if (!(rms > 0.0) || peak / rms > kMaxCrest)
    throw Error(ErrorCode::BadConfig, label.name() + ": clean signal crest factor outside the supported range");

  std::mt19937_64 rng(sample_seed(cfg.master_seed, label, index));
  std::normal_distribution<double> noise(0.0, 1.0);
  Segment seg;
  seg.sample_rate_hz = cfg.sample_rate_hz;
  seg.label = label;
  seg.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double z = noise(rng);
    z = std::clamp(z, -kNoiseSigmas, kNoiseSigmas);
    seg.samples[i] = static_cast<float>(clean[i] / rms + cfg.noise_sigma * z);
  }
  return seg;
}

double sample_bound(const SynthConfig& cfg) { return kMaxCrest + kNoiseSigmas * cfg.noise_sigma; }

std::string sample_relative_path(FaultClass label, std::size_t index) {
  char file[32];
  std::snprintf(file, sizeof file, "sample_%04zu.rws", index);
  return "signals/" + label.name() + "/" + file;
}

DatasetManifest generate_dataset(const SynthConfig& cfg, const std::string& out_dir) {
  cfg.validate();
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec || !std::filesystem::is_directory(out_dir))
    throw Error(ErrorCode::IoFailure, "cannot create dataset directory " + out_dir);

  std::vector<std::pair<std::string, FaultClass>> entries;
  const auto base = std::filesystem::path(out_dir);
  for (int c = 0; c < kNumClasses; ++c) {
    const auto label = FaultClass::from_id(c);
    for (std::size_t i = 0; i < cfg.samples_per_class; ++i) {
      const auto rel = sample_relative_path(label, i);
      auto seg = generate_sample(label, i, cfg);
      save_recording((base / rel).string(),
                     Recording(std::move(seg.samples), 1, cfg.sample_rate_hz, label.name() + "#" + std::to_string(i)));
      entries.emplace_back(rel, label);
    }
  }
  auto manifest = split_dataset(entries, cfg.val_fraction, cfg.test_fraction, cfg.master_seed);
  write_manifest((base / "manifest.csv").string(), manifest);
  return manifest;
}

}  // namespace railwave
