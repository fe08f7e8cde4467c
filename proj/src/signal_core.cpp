#include "railwave/signal_core.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "railwave/binary_io.hpp"
#include "railwave/error.hpp"

namespace railwave {

namespace {

constexpr std::string_view kSignalMagic = "RWSG";
constexpr std::uint32_t kSignalVersion = 1;
constexpr std::size_t kSignalHeaderBytes = 32;

bool ends_with_csv(const std::string& path) {
  auto ext = std::filesystem::path(path).extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".csv";
}

std::vector<std::string> split_line(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream ss(line);
  while (std::getline(ss, cur, sep)) out.push_back(cur);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

std::string trim(std::string s) {
  auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

void check_channels(std::size_t found, std::size_t expected, const std::string& path) {
  if (expected != 0 && found != expected)
    throw Error(ErrorCode::ChannelCountMismatch,
                path + ": expected " + std::to_string(expected) + " channels, found " + std::to_string(found));
}

void check_rate(double found, double expected, const std::string& path) {
  if (expected > 0.0 && found != expected)
    throw Error(ErrorCode::MalformedHeader, path + ": sample rate " + std::to_string(found) + " Hz, expected " +
                                                std::to_string(expected) + " Hz");
}

Recording load_csv(const std::string& path, std::size_t expected_channels, double expected_rate_hz) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::MissingFile, "cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::MalformedHeader, path + ": empty file");
  auto header = split_line(trim(line), ',');
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (trim(header[c]) != "ch" + std::to_string(c))
      throw Error(ErrorCode::MalformedHeader, path + ": header column " + std::to_string(c) + " is not ch" +
                                                  std::to_string(c));
  }
  const std::size_t channels = header.size();
  check_channels(channels, expected_channels, path);
  if (!(expected_rate_hz > 0.0))
    throw Error(ErrorCode::MalformedHeader, path + ": CSV import needs a positive expected sample rate");

  std::vector<std::vector<float>> columns(channels);
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    line = trim(line);
    if (line.empty()) continue;
    auto cells = split_line(line, ',');
    if (cells.size() != channels)
      throw Error(ErrorCode::ChannelCountMismatch, path + ": row " + std::to_string(row) + " has " +
                                                       std::to_string(cells.size()) + " cells");
    for (std::size_t c = 0; c < channels; ++c) {
      auto cell = trim(cells[c]);
      float v = 0.0f;
      auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (ec != std::errc() || ptr != cell.data() + cell.size()) {
        // from_chars rejects "nan"/"inf" spellings on some libraries; treat them as non-finite, not malformed.
        std::string lower = cell;
        std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char ch) { return std::tolower(ch); });
        if (lower.find("nan") != std::string::npos || lower.find("inf") != std::string::npos)
          throw Error(ErrorCode::NonFiniteSample, path + ": row " + std::to_string(row));
        throw Error(ErrorCode::MalformedHeader, path + ": bad number '" + cell + "' on row " + std::to_string(row));
      }
      columns[c].push_back(v);
    }
  }
  const std::size_t length = columns.empty() ? 0 : columns[0].size();
  std::vector<float> samples;
  samples.reserve(channels * length);
  for (auto& col : columns) samples.insert(samples.end(), col.begin(), col.end());
  return Recording(std::move(samples), channels, expected_rate_hz, path);
}

}  // namespace

FaultClass FaultClass::from_id(int id) {
  if (id < 0 || id >= kNumClasses) throw Error(ErrorCode::BadIndex, "fault class id " + std::to_string(id));
  return FaultClass(id);
}

FaultClass FaultClass::from_name(std::string_view name) {
  constexpr std::string_view prefix = "TYPE";
  if (name.size() <= prefix.size() || name.substr(0, prefix.size()) != prefix)
    throw Error(ErrorCode::BadIndex, "fault class name '" + std::string(name) + "'");
  auto digits = name.substr(prefix.size());
  int id = -1;
  auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), id);
  // Reject "TYPE01" so that names and ids stay a bijection.
  if (ec != std::errc() || ptr != digits.data() + digits.size() || (digits.size() > 1 && digits[0] == '0'))
    throw Error(ErrorCode::BadIndex, "fault class name '" + std::string(name) + "'");
  return from_id(id);
}

Recording::Recording(std::vector<float> samples, std::size_t channel_count, double sample_rate_hz,
                     std::string source_id)
    : samples_(std::move(samples)), channels_(channel_count), rate_(sample_rate_hz), source_(std::move(source_id)) {
  if (channels_ == 0) throw Error(ErrorCode::ChannelCountMismatch, "recording needs at least one channel");
  if (!(rate_ > 0.0) || !std::isfinite(rate_)) throw Error(ErrorCode::MalformedHeader, "sample rate must be > 0");
  if (samples_.empty() || samples_.size() % channels_ != 0)
    throw Error(ErrorCode::ChannelCountMismatch, "sample count not divisible into equal non-empty channels");
  length_ = samples_.size() / channels_;
  for (std::size_t i = 0; i < samples_.size(); ++i) {
    if (!std::isfinite(samples_[i]))
      throw Error(ErrorCode::NonFiniteSample, source_ + ": channel " + std::to_string(i / length_) + " sample " +
                                                  std::to_string(i % length_));
  }
}

std::span<const float> Recording::channel(std::size_t c) const {
  if (c >= channels_) throw Error(ErrorCode::BadChannel, "channel " + std::to_string(c));
  return std::span<const float>(samples_).subspan(c * length_, length_);
}

std::string_view to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "train";
}

Split parse_split(std::string_view s) {
  if (s == "train") return Split::Train;
  if (s == "val") return Split::Val;
  if (s == "test") return Split::Test;
  throw Error(ErrorCode::BadConfig, "unknown split '" + std::string(s) + "'");
}

std::vector<ManifestEntry> DatasetManifest::of_split(Split s) const {
  std::vector<ManifestEntry> out;
  for (const auto& e : entries)
    if (e.split == s) out.push_back(e);
  return out;
}

Recording load_recording(const std::string& path, std::size_t expected_channels, double expected_rate_hz) {
  if (!std::filesystem::exists(path)) throw Error(ErrorCode::MissingFile, path);
  if (ends_with_csv(path)) return load_csv(path, expected_channels, expected_rate_hz);

  const auto bytes = io::read_file(path);
  io::ByteReader r(bytes, ErrorCode::MalformedHeader);
  if (bytes.size() < kSignalHeaderBytes) throw Error(ErrorCode::MalformedHeader, path + ": short header");
  if (!r.match_magic(kSignalMagic)) throw Error(ErrorCode::MalformedHeader, path + ": bad magic");
  const auto version = r.get_u32();
  if (version != kSignalVersion)
    throw Error(ErrorCode::MalformedHeader, path + ": unsupported version " + std::to_string(version));
  const std::size_t channels = r.get_u32();
  const double rate = r.get_f64();
  const std::uint64_t length = r.get_u64();
  if (r.get_u32() != 0) throw Error(ErrorCode::MalformedHeader, path + ": reserved bytes not zero");
  if (channels == 0 || length == 0) throw Error(ErrorCode::MalformedHeader, path + ": empty recording");
  if (!(rate > 0.0) || !std::isfinite(rate)) throw Error(ErrorCode::MalformedHeader, path + ": bad sample rate");

  check_channels(channels, expected_channels, path);
  check_rate(rate, expected_rate_hz, path);

  const std::size_t payload = r.remaining();
  const std::size_t channel_bytes = static_cast<std::size_t>(length) * sizeof(float);
  if (payload != channels * channel_bytes) {
    if (payload % channel_bytes == 0)
      throw Error(ErrorCode::ChannelCountMismatch, path + ": header declares " + std::to_string(channels) +
                                                       " channels, data holds " +
                                                       std::to_string(payload / channel_bytes));
    throw Error(ErrorCode::MalformedHeader, path + ": payload size does not match header");
  }
  std::vector<float> samples(channels * length);
  r.get_bytes(samples.data(), payload);
  return Recording(std::move(samples), channels, rate, path);
}

std::vector<std::uint8_t> encode_recording(const Recording& rec) {
  io::ByteWriter w;
  w.put_magic(kSignalMagic);
  w.put_u32(kSignalVersion);
  w.put_u32(static_cast<std::uint32_t>(rec.channel_count()));
  w.put_f64(rec.sample_rate_hz());
  w.put_u64(rec.length());
  w.put_u32(0);
  const auto s = rec.samples();
  w.put_bytes(s.data(), s.size_bytes());
  return w.bytes();
}

void save_recording(const std::string& path, const Recording& rec) { io::write_file(path, encode_recording(rec)); }

std::vector<Segment> segment_recording(const Recording& rec, std::size_t channel, std::size_t n_parts,
                                       FaultClass label) {
  if (channel >= rec.channel_count()) throw Error(ErrorCode::BadChannel, "channel " + std::to_string(channel));
  if (n_parts < 1 || n_parts > rec.length())
    throw Error(ErrorCode::BadPartCount, std::to_string(n_parts) + " parts for length " + std::to_string(rec.length()));
  const auto data = rec.channel(channel);
  const std::size_t part_len = rec.length() / n_parts;
  std::vector<Segment> out;
  out.reserve(n_parts);
  for (std::size_t i = 0; i < n_parts; ++i) {
    auto slice = data.subspan(i * part_len, part_len);
    out.push_back(Segment{std::vector<float>(slice.begin(), slice.end()), rec.sample_rate_hz(), label,
                          static_cast<int>(i), static_cast<int>(n_parts)});
  }
  return out;
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

DatasetManifest split_dataset(const std::vector<std::pair<std::string, FaultClass>>& entries, double val_fraction,
                              double test_fraction, std::uint64_t seed) {
  if (!(val_fraction >= 0.0) || !(test_fraction >= 0.0) || !(val_fraction + test_fraction < 1.0))
    throw Error(ErrorCode::BadFraction, "val=" + std::to_string(val_fraction) + " test=" + std::to_string(test_fraction));

  std::set<std::string> seen;
  std::vector<std::vector<std::size_t>> by_class(kNumClasses);
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (!seen.insert(entries[i].first).second)
      throw Error(ErrorCode::BadConfig, "duplicate manifest path " + entries[i].first);
    by_class[entries[i].second.id()].push_back(i);
  }

  DatasetManifest m;
  m.seed = seed;
  std::vector<Split> tags(entries.size(), Split::Train);
  // Guards against products like 30 * 0.7 landing a hair under an integer.
  constexpr double kFloorSlack = 1e-9;
  for (int c = 0; c < kNumClasses; ++c) {
    auto& idx = by_class[c];
    if (idx.empty()) throw Error(ErrorCode::EmptyClass, FaultClass::from_id(c).name() + " has no entries");
    std::mt19937_64 rng(mix_seed(seed, static_cast<std::uint64_t>(c)));
    std::shuffle(idx.begin(), idx.end(), rng);
    const double n = static_cast<double>(idx.size());
    const auto n_test = static_cast<std::size_t>(std::floor(n * test_fraction + kFloorSlack));
    const auto n_val = static_cast<std::size_t>(std::floor(n * val_fraction + kFloorSlack));
    for (std::size_t k = 0; k < idx.size(); ++k) {
      if (k < n_test)
        tags[idx[k]] = Split::Test;
      else if (k < n_test + n_val)
        tags[idx[k]] = Split::Val;
    }
  }
  m.entries.reserve(entries.size());
  for (std::size_t i = 0; i < entries.size(); ++i) m.entries.push_back({entries[i].first, entries[i].second, tags[i]});
  return m;
}

void write_manifest(const std::string& path, const DatasetManifest& manifest) {
  std::ostringstream os;
  os << "path,class_id,split\n";
  for (const auto& e : manifest.entries) os << e.path << ',' << e.label.id() << ',' << to_string(e.split) << '\n';
  const auto text = os.str();
  io::write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

DatasetManifest read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::MissingManifest, path);
  std::string line;
  if (!std::getline(in, line) || trim(line) != "path,class_id,split")
    throw Error(ErrorCode::MissingManifest, path + ": bad header");
  DatasetManifest m;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    line = trim(line);
    if (line.empty()) continue;
    auto cells = split_line(line, ',');
    if (cells.size() != 3) throw Error(ErrorCode::MissingManifest, path + ": row " + std::to_string(row));
    int id = -1;
    auto [ptr, ec] = std::from_chars(cells[1].data(), cells[1].data() + cells[1].size(), id);
    if (ec != std::errc() || ptr != cells[1].data() + cells[1].size())
      throw Error(ErrorCode::MissingManifest, path + ": bad class id on row " + std::to_string(row));
    m.entries.push_back({cells[0], FaultClass::from_id(id), parse_split(cells[2])});
  }
  return m;
}

}  // namespace railwave
