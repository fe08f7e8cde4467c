#include "railwave/pipeline.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include "railwave/binary_io.hpp"
#include "railwave/checkpoint.hpp"
#include "railwave/error.hpp"
#include "railwave/synth_data.hpp"
#include "railwave/training.hpp"

namespace fs = std::filesystem;

namespace railwave {

namespace {

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw Error(ErrorCode::IoFailure, "cannot create directory " + dir);
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    if (!cell.empty() && cell.back() == '\r') cell.pop_back();
    cells.push_back(cell);
  }
  return cells;
}

std::string image_relative_path(const std::string& recording_path, std::size_t part) {
  fs::path p(recording_path);
  p.replace_extension();
  return p.string() + "_p" + std::to_string(part) + ".rwim";
}

double recording_rate(const RunConfig& cfg) { return cfg.synth.sample_rate_hz; }

int parse_class(const std::string& cell) {
  if (!cell.empty() && cell[0] == 'T') return FaultClass::from_name(cell).id();
  std::size_t used = 0;
  int id = -1;
  try {
    id = std::stoi(cell, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != cell.size() || cell.empty()) throw Error(ErrorCode::BadLabel, "'" + cell + "' is not a class id");
  return id;
}

// Segments of one recording turned into images; empty `error` on success.
struct RecordingOutcome {
  std::vector<FeatureRecord> records;
  std::size_t computed = 0;
  std::size_t reused = 0;
  std::string error;
};

RecordingOutcome extract_recording(const RunConfig& cfg, const RunPaths& paths, const ManifestEntry& entry,
                                   bool cache_valid) {
  RecordingOutcome out;
  try {
    const auto src = fs::path(cfg.resolved_dataset_dir()) / entry.path;
    if (!fs::exists(src)) throw Error(ErrorCode::MissingFile, src.string());
    const auto src_time = fs::last_write_time(src);

    std::vector<std::string> rel;
    bool all_fresh = cache_valid;
    for (std::size_t k = 0; k < cfg.n_parts; ++k) {
      rel.push_back(image_relative_path(entry.path, k));
      const auto dst = fs::path(paths.features) / rel.back();
      std::error_code ec;
      if (all_fresh && !(fs::exists(dst) && fs::last_write_time(dst, ec) >= src_time && !ec)) all_fresh = false;
    }
    if (all_fresh) {
      for (const auto& r : rel) out.records.push_back({r, entry.label, entry.split});
      out.reused = rel.size();
      return out;
    }

    const Recording rec = load_recording(src.string(), cfg.expected_channels, recording_rate(cfg));
    const MorletParams morlet{cfg.omega0};
    const ScaleGrid grid = make_scale_grid(cfg.f_min_hz, cfg.resolved_f_max(rec.sample_rate_hz()), cfg.n_scales,
                                           rec.sample_rate_hz(), morlet);
    const auto segments = segment_recording(rec, cfg.channel, cfg.n_parts, entry.label);
    for (std::size_t k = 0; k < segments.size(); ++k) {
      FeatureImage img = scalogram_to_image(cwt(segments[k], grid, morlet), cfg.image_size, cfg.image_size);
      img.label = entry.label;
      save_image((fs::path(paths.features) / rel[k]).string(), img);
      out.records.push_back({rel[k], entry.label, entry.split});
      ++out.computed;
    }
  } catch (const std::exception& e) {
    out.records.clear();
    out.error = entry.path + ": " + e.what();
  }
  return out;
}

void write_text(const std::string& path, const std::string& text) {
  io::write_file(path, std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

}  // namespace

OutputLock::OutputLock(const std::string& output_dir) : path_((fs::path(output_dir) / ".railwave.lock").string()) {
  ensure_dir(output_dir);
  const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0) {
    if (errno == EEXIST)
      throw Error(ErrorCode::Locked, output_dir + " is in use by another run (remove " + path_ + " if that run died)");
    throw Error(ErrorCode::IoFailure, "cannot create " + path_ + ": " + std::strerror(errno));
  }
  const auto pid = std::to_string(::getpid()) + "\n";
  [[maybe_unused]] auto n = ::write(fd, pid.data(), pid.size());
  ::close(fd);
}

OutputLock::~OutputLock() { ::unlink(path_.c_str()); }

RunPaths::RunPaths(const RunConfig& cfg)
    : root(cfg.output_dir),
      data(cfg.resolved_dataset_dir()),
      features((fs::path(cfg.output_dir) / "features").string()),
      train((fs::path(cfg.output_dir) / "train").string()),
      eval((fs::path(cfg.output_dir) / "eval").string()) {}

std::string RunPaths::manifest() const { return (fs::path(data) / "manifest.csv").string(); }
std::string RunPaths::feature_index() const { return (fs::path(features) / "index.csv").string(); }
std::string RunPaths::feature_hash() const { return (fs::path(features) / "config_hash").string(); }
std::string RunPaths::checkpoint() const { return (fs::path(train) / "checkpoint.rwck").string(); }

std::uint64_t feature_config_hash(const RunConfig& cfg) {
  static const char* const keys[] = {"dataset.source", "dataset.dir", "dataset.sample_rate_hz", "dataset.channel",
                                     "dataset.n_parts", "dataset.expected_channels", "wavelet.omega0",
                                     "wavelet.f_min_hz", "wavelet.f_max_hz", "wavelet.n_scales", "wavelet.image_size"};
  std::string text;
  for (const char* k : keys) text += std::string(k) + "=" + get_config_value(cfg, k) + "\n";
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::size_t worker_count() {
  if (const char* env = std::getenv("RAILWAVE_THREADS")) {
    char* end = nullptr;
    const long n = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && n > 0) return static_cast<std::size_t>(n);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

std::vector<FeatureRecord> read_feature_index(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::MissingFeatures, "feature index " + path + " not found; run `railwave extract` first");
  std::string line;
  if (!std::getline(in, line) || split_csv_line(line) != std::vector<std::string>{"image", "class_id", "split"})
    throw Error(ErrorCode::MissingFeatures, path + ": bad header");
  std::vector<FeatureRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != 3) throw Error(ErrorCode::MissingFeatures, path + ": malformed row '" + line + "'");
    out.push_back({cells[0], FaultClass::from_id(std::stoi(cells[1])), parse_split(cells[2])});
  }
  return out;
}

GenerateResult run_generate(const RunConfig& cfg, bool dry_run, std::ostream& log) {
  cfg.validate();
  const RunPaths paths(cfg);
  if (cfg.dataset_source != "synthetic") {
    log << "dataset.source = directory: nothing to generate, using " << paths.manifest() << '\n';
    return {read_manifest(paths.manifest())};
  }
  const std::size_t n = cfg.synth.samples_per_class * kNumClasses;
  if (dry_run) {
    log << "would generate " << n << " samples (" << cfg.synth.samples_per_class << " per class, "
        << cfg.synth.segment_length << " samples at " << cfg.synth.sample_rate_hz << " Hz) into " << paths.data << '\n';
    return {};
  }
  OutputLock lock(paths.root);
  ensure_dir(paths.data);
  GenerateResult result{generate_dataset(cfg.synth, paths.data)};
  log << "generated " << result.manifest.entries.size() << " samples; manifest " << paths.manifest() << '\n';
  return result;
}

ExtractResult run_extract(const RunConfig& cfg, bool dry_run, std::ostream& log) {
  cfg.validate();
  const RunPaths paths(cfg);
  const DatasetManifest manifest = read_manifest(paths.manifest());
  const std::uint64_t hash = feature_config_hash(cfg);
  char hash_text[32];
  std::snprintf(hash_text, sizeof hash_text, "%016llx\n", static_cast<unsigned long long>(hash));
  const bool cache_valid = fs::exists(paths.feature_hash()) && slurp(paths.feature_hash()) == hash_text;

  ExtractResult result;
  if (dry_run) {
    log << "would extract " << manifest.entries.size() * cfg.n_parts << " images from " << manifest.entries.size()
        << " recordings into " << paths.features << (cache_valid ? " (cache valid)" : " (cache invalid)") << '\n';
    return result;
  }
  OutputLock lock(paths.root);
  ensure_dir(paths.features);
  if (!cache_valid) fs::remove(paths.feature_hash());

  std::vector<RecordingOutcome> outcomes(manifest.entries.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < outcomes.size(); i = next++)
      outcomes[i] = extract_recording(cfg, paths, manifest.entries[i], cache_valid);
  };
  const std::size_t n_workers = std::min(worker_count(), std::max<std::size_t>(outcomes.size(), 1));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < n_workers; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  std::ostringstream index;
  index << "image,class_id,split\n";
  for (const auto& o : outcomes) {
    if (!o.error.empty()) {
      result.failures.push_back(o.error);
      continue;
    }
    for (const auto& r : o.records) index << r.image_path << ',' << r.label.id() << ',' << to_string(r.split) << '\n';
    result.segments += o.records.size();
    result.computed += o.computed;
    result.reused += o.reused;
  }
  write_text(paths.feature_index(), index.str());
  write_text(paths.feature_hash(), hash_text);

  log << "extracted " << result.segments << " images (" << result.computed << " computed, " << result.reused
      << " reused) into " << paths.features << '\n';
  for (const auto& f : result.failures) log << "failed: " << f << '\n';
  return result;
}

std::vector<FeatureImage> load_split_images(const RunConfig& cfg, Split split) {
  const RunPaths paths(cfg);
  if (!fs::is_directory(paths.features))
    throw Error(ErrorCode::MissingFeatures, "feature directory " + paths.features + " not found; run `railwave extract` first");
  std::vector<FeatureImage> out;
  for (const auto& r : read_feature_index(paths.feature_index())) {
    if (r.split != split) continue;
    const auto path = (fs::path(paths.features) / r.image_path).string();
    if (!fs::exists(path)) throw Error(ErrorCode::MissingFeatures, "feature image " + path + " not found");
    out.push_back(load_image(path));
  }
  return out;
}

TrainResult run_train(const RunConfig& cfg, bool dry_run, std::ostream& log) {
  cfg.validate();
  const RunPaths paths(cfg);
  ResNetSpec spec = ResNetSpec::named(cfg.model_name);
  spec.input_height = spec.input_width = cfg.image_size;
  auto load_nonempty = [&](Split split) {
    auto images = load_split_images(cfg, split);
    if (images.empty())
      throw Error(ErrorCode::EmptySplit, std::string(to_string(split)) +
                                             " split has no images; raise dataset.samples_per_class or its fraction");
    return make_image_set(std::move(images));
  };
  const ImageSet train = load_nonempty(Split::Train);
  const ImageSet val = load_nonempty(Split::Val);

  TrainResult result;
  result.checkpoint_path = paths.checkpoint();
  if (dry_run) {
    log << "would train ResNet-" << cfg.model_name << " on " << train.size() << " images (val " << val.size()
        << ") for " << cfg.epochs << " epochs, batch " << cfg.batch_size << ", lr " << cfg.lr << '\n';
    return result;
  }
  OutputLock lock(paths.root);
  ensure_dir(paths.train);

  Model model(spec, cfg.model_seed);
  Sgd sgd(cfg.momentum, cfg.weight_decay);
  const LrSchedule schedule{cfg.lr, cfg.lr_decay, cfg.lr_milestones};
  std::ostringstream epochs_csv, batches_csv;
  epochs_csv << "epoch,lr,mean_loss,val_accuracy\n";
  batches_csv << "batch,loss\n";
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    const double lr = schedule.lr_for_epoch(e, cfg.epochs);
    const EpochStats stats = train_epoch(model, sgd, train, cfg.batch_size, lr, mix_seed(cfg.training_seed, e));
    const double acc = evaluate(model, val).accuracy;
    for (double loss : stats.batch_losses) {
      batches_csv << result.batch_losses.size() << ',' << loss << '\n';
      result.batch_losses.push_back(loss);
    }
    result.val_accuracy.push_back(acc);
    epochs_csv << e << ',' << lr << ',' << stats.mean_loss << ',' << acc << '\n';
    log << "epoch " << e + 1 << '/' << cfg.epochs << " lr " << lr << " loss " << stats.mean_loss << " val_acc " << acc
        << std::endl;
    write_text((fs::path(paths.train) / "history_epochs.csv").string(), epochs_csv.str());
    write_text((fs::path(paths.train) / "history_batches.csv").string(), batches_csv.str());
  }
  write_text((fs::path(paths.train) / "history_epochs.csv").string(), epochs_csv.str());
  write_text((fs::path(paths.train) / "history_batches.csv").string(), batches_csv.str());

  TrainingState state{sgd.velocity(), cfg.epochs, cfg.training_seed};
  save_checkpoint(paths.checkpoint(), model, state);
  if (!result.val_accuracy.empty()) log << "final val accuracy " << result.val_accuracy.back() << '\n';
  log << "checkpoint " << paths.checkpoint() << '\n';
  return result;
}

EvalResult run_eval(const RunConfig& cfg, const EvalOptions& options, bool dry_run, std::ostream& log) {
  cfg.validate();
  const RunPaths paths(cfg);
  const std::string out_dir =
      options.out_dir.empty() ? (fs::path(paths.eval) / std::string(to_string(options.split))).string() : options.out_dir;

  std::vector<int> preds, labels;
  if (!options.predictions_file.empty()) {
    std::ifstream in(options.predictions_file);
    if (!in) throw Error(ErrorCode::MissingFile, options.predictions_file);
    std::string line;
    std::size_t row = 0;
    while (std::getline(in, line)) {
      ++row;
      if (line.empty() || (row == 1 && line.rfind("label", 0) == 0)) continue;
      const auto cells = split_csv_line(line);
      if (cells.size() != 2)
        throw Error(ErrorCode::BadConfig, options.predictions_file + ": row " + std::to_string(row) + " needs label,prediction");
      labels.push_back(parse_class(cells[0]));
      preds.push_back(parse_class(cells[1]));
    }
  } else {
    const std::string ckpt = options.checkpoint.empty() ? paths.checkpoint() : options.checkpoint;
    if (!fs::exists(ckpt)) throw Error(ErrorCode::MissingFile, "checkpoint " + ckpt + " not found");
    const auto images = load_split_images(cfg, options.split);
    if (dry_run) {
      log << "would evaluate " << ckpt << " on " << images.size() << " " << to_string(options.split)
          << " images into " << out_dir << '\n';
      return {};
    }
    const LoadedCheckpoint loaded = load_checkpoint(ckpt);
    const Evaluation ev = evaluate(loaded.model, make_image_set(images));
    preds = ev.predictions;
    for (const auto& img : images) labels.push_back(img.label.id());
  }
  if (dry_run) {
    log << "would score " << preds.size() << " predictions into " << out_dir << '\n';
    return {};
  }
  OutputLock lock(paths.root);
  ensure_dir(out_dir);
  EvalResult result;
  result.confusion = railwave::accumulate(preds, labels, kNumClasses);
  result.accuracy = accuracy(result.confusion);
  result.report = emit_report(result.confusion, per_class_metrics(result.confusion), out_dir);
  log << to_string(options.split) << " accuracy " << result.accuracy << " (" << result.confusion.trace() << '/'
      << result.confusion.total() << "); report " << result.report.table_txt << '\n';
  return result;
}

}  // namespace railwave
