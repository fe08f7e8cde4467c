#pragma once

// The four pipeline stages behind the `railwave` CLI. Each stage reads the previous stage's
// files from the run's output directory:
//
//   <out>/data/manifest.csv, signals/...          generate (synthetic source only)
//   <out>/features/index.csv, config_hash, *.rwim extract
//   <out>/train/checkpoint.rwck, history_*.csv    train
//   <out>/eval/<split>/...                        eval

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "railwave/config.hpp"
#include "railwave/metrics.hpp"
#include "railwave/signal_core.hpp"
#include "railwave/wavelet.hpp"

namespace railwave {

/// Exclusive claim on an output directory, released on destruction. Throws Locked when held.
class OutputLock {
 public:
  explicit OutputLock(const std::string& output_dir);
  ~OutputLock();
  OutputLock(const OutputLock&) = delete;
  OutputLock& operator=(const OutputLock&) = delete;

 private:
  std::string path_;
};

struct RunPaths {
  std::string root, data, features, train, eval;

  explicit RunPaths(const RunConfig& cfg);
  std::string manifest() const;
  std::string feature_index() const;
  std::string feature_hash() const;
  std::string checkpoint() const;
};

/// FNV-1a over every setting that changes extracted features.
std::uint64_t feature_config_hash(const RunConfig& cfg);

/// Worker count for extraction: RAILWAVE_THREADS if set and positive, else the hardware count.
std::size_t worker_count();

struct FeatureRecord {
  std::string image_path;  // relative to the features directory
  FaultClass label;
  Split split;
};

std::vector<FeatureRecord> read_feature_index(const std::string& path);

struct GenerateResult {
  DatasetManifest manifest;
};

struct ExtractResult {
  std::size_t segments = 0;
  std::size_t computed = 0;
  std::size_t reused = 0;
  std::vector<std::string> failures;  // "<recording>: <message>"
};

struct TrainResult {
  std::vector<double> val_accuracy;  // one per epoch
  std::vector<double> batch_losses;
  std::string checkpoint_path;
};

struct EvalOptions {
  std::string checkpoint;        // empty: the run's own checkpoint
  Split split = Split::Test;
  std::string out_dir;           // empty: <out>/eval/<split>
  std::string predictions_file;  // CSV `label,prediction`; replaces the model when set
};

struct EvalResult {
  double accuracy = 0.0;
  ConfusionMatrix confusion{kNumClasses};
  ReportPaths report;
};

GenerateResult run_generate(const RunConfig& cfg, bool dry_run, std::ostream& log);
ExtractResult run_extract(const RunConfig& cfg, bool dry_run, std::ostream& log);
TrainResult run_train(const RunConfig& cfg, bool dry_run, std::ostream& log);
EvalResult run_eval(const RunConfig& cfg, const EvalOptions& options, bool dry_run, std::ostream& log);

/// Loads the images of one split listed in the feature index.
std::vector<FeatureImage> load_split_images(const RunConfig& cfg, Split split);

}  // namespace railwave
