#pragma once

// Run configuration: a flat `section.key = value` text file (grammar in docs/config.md).

#include <cstdint>
#include <string>
#include <vector>

#include "railwave/synth_data.hpp"

namespace railwave {

struct RunConfig {
  // [run]
  std::string output_dir = "railwave_out";

  // [dataset]
  std::string dataset_source = "synthetic";  // synthetic | directory
  std::string dataset_dir;                   // empty: <output_dir>/data
  SynthConfig synth;
  std::size_t channel = 0;
  std::size_t n_parts = 1;
  std::size_t expected_channels = 0;  // 0 accepts any channel count

  // [wavelet]
  double omega0 = 6.0;
  double f_min_hz = 50.0;
  double f_max_hz = 0.0;  // 0: 0.9 * Nyquist
  std::size_t n_scales = 64;
  std::size_t image_size = 64;

  // [model]
  std::string model_name = "tiny";
  std::uint64_t model_seed = 1;

  // [training]
  std::size_t epochs = 20;
  std::size_t batch_size = 16;
  double lr = 0.05;
  double lr_decay = 0.2;
  std::vector<double> lr_milestones = {0.6, 0.8};
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::uint64_t training_seed = 1;

  std::string resolved_dataset_dir() const;
  double resolved_f_max(double rate_hz) const;

  /// Throws BadConfig on any out-of-range or unknown value.
  void validate() const;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

/// Every recognised key, in canonical order.
const std::vector<std::string>& config_keys();

void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value);
std::string get_config_value(const RunConfig& cfg, const std::string& key);

RunConfig parse_config(const std::string& text);
/// Canonical text; parse_config(render_config(c)) == c.
std::string render_config(const RunConfig& cfg);
RunConfig load_config_file(const std::string& path);

/// Overrides applied by --seed: dataset, model and training seeds together.
void apply_seed(RunConfig& cfg, std::uint64_t seed);

}  // namespace railwave
