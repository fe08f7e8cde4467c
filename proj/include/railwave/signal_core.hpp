#pragma once

// Raw vibration recordings: loading, segmentation, labeling and dataset splits.

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace railwave {

inline constexpr int kNumClasses = 17;

/// One of the 17 fault labels, TYPE0..TYPE16.
class FaultClass {
 public:
  static FaultClass from_id(int id);
  static FaultClass from_name(std::string_view name);

  int id() const { return id_; }
  std::string name() const { return "TYPE" + std::to_string(id_); }

  friend bool operator==(FaultClass, FaultClass) = default;
  friend auto operator<=>(FaultClass, FaultClass) = default;

 private:
  explicit FaultClass(int id) : id_(id) {}
  int id_;
};

/// Multi-channel time series, stored channel-major.
class Recording {
 public:
  Recording(std::vector<float> samples, std::size_t channel_count, double sample_rate_hz, std::string source_id);

  std::size_t channel_count() const { return channels_; }
  std::size_t length() const { return length_; }
  double sample_rate_hz() const { return rate_; }
  const std::string& source_id() const { return source_; }

  std::span<const float> channel(std::size_t c) const;
  std::span<const float> samples() const { return samples_; }

 private:
  std::vector<float> samples_;
  std::size_t channels_;
  std::size_t length_;
  double rate_;
  std::string source_;
};

struct Segment {
  std::vector<float> samples;
  double sample_rate_hz = 0.0;
  FaultClass label = FaultClass::from_id(0);
  int segment_index = 0;
  int n_parts = 1;
};

enum class Split { Train, Val, Test };

std::string_view to_string(Split s);
Split parse_split(std::string_view s);

struct ManifestEntry {
  std::string path;
  FaultClass label;
  Split split;
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  std::uint64_t seed = 0;

  std::vector<ManifestEntry> of_split(Split s) const;
};

/// Reads the binary RWSG format, or the CSV import format when the path ends in ".csv"
/// (header `ch0,ch1,...`, one row per sample; the rate comes from `expected_rate_hz`).
Recording load_recording(const std::string& path, std::size_t expected_channels, double expected_rate_hz);

/// Writes the binary RWSG format (32-byte header, channel-major float32 samples).
void save_recording(const std::string& path, const Recording& rec);

std::vector<std::uint8_t> encode_recording(const Recording& rec);

/// n_parts contiguous equal-length slices of one channel; the remainder is dropped.
std::vector<Segment> segment_recording(const Recording& rec, std::size_t channel, std::size_t n_parts,
                                       FaultClass label = FaultClass::from_id(0));

/// Stratified seeded split. Per class: floor(n*test) test, floor(n*val) val, remainder train.
/// Every one of the 17 classes must be present.
DatasetManifest split_dataset(const std::vector<std::pair<std::string, FaultClass>>& entries, double val_fraction,
                              double test_fraction, std::uint64_t seed);

/// Manifest CSV: header `path,class_id,split`.
void write_manifest(const std::string& path, const DatasetManifest& manifest);
DatasetManifest read_manifest(const std::string& path);

/// SplitMix64 finalizer; used to derive independent stream seeds from tuples.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

}  // namespace railwave
