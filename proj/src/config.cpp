#include "railwave/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "railwave/error.hpp"
#include "railwave/resnet.hpp"

namespace railwave {

namespace {

std::string trim(std::string s) {
  auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

double to_double(const std::string& key, const std::string& v) {
  // strtod rather than from_chars: GCC 11 lacks floating-point from_chars in some configurations.
  char* end = nullptr;
  const double d = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size() || !std::isfinite(d))
    throw Error(ErrorCode::BadConfig, key + ": '" + v + "' is not a number");
  return d;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc() || p != v.data() + v.size())
    throw Error(ErrorCode::BadConfig, key + ": '" + v + "' is not a non-negative integer");
  return out;
}

std::string fmt_double(double d) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", d);
  return buf;
}

struct Field {
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename Member>
Field size_field(Member member) {
  return {[member](RunConfig& c, const std::string& k, const std::string& v) { member(c) = to_u64(k, v); },
          [member](const RunConfig& c) { return std::to_string(member(c)); }};
}

template <typename Member>
Field double_field(Member member) {
  return {[member](RunConfig& c, const std::string& k, const std::string& v) { member(c) = to_double(k, v); },
          [member](const RunConfig& c) { return fmt_double(member(c)); }};
}

template <typename Member>
Field string_field(Member member) {
  return {[member](RunConfig& c, const std::string&, const std::string& v) { member(c) = v; },
          [member](const RunConfig& c) { return member(c); }};
}

const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> table = {
      {"run.output_dir", string_field([](auto& c) -> auto& { return c.output_dir; })},
      {"dataset.source", string_field([](auto& c) -> auto& { return c.dataset_source; })},
      {"dataset.dir", string_field([](auto& c) -> auto& { return c.dataset_dir; })},
      {"dataset.sample_rate_hz", double_field([](auto& c) -> auto& { return c.synth.sample_rate_hz; })},
      {"dataset.segment_length", size_field([](auto& c) -> auto& { return c.synth.segment_length; })},
      {"dataset.samples_per_class", size_field([](auto& c) -> auto& { return c.synth.samples_per_class; })},
      {"dataset.noise_sigma", double_field([](auto& c) -> auto& { return c.synth.noise_sigma; })},
      {"dataset.base_freq_hz", double_field([](auto& c) -> auto& { return c.synth.base_freq_hz; })},
      {"dataset.seed", size_field([](auto& c) -> auto& { return c.synth.master_seed; })},
      {"dataset.val_fraction", double_field([](auto& c) -> auto& { return c.synth.val_fraction; })},
      {"dataset.test_fraction", double_field([](auto& c) -> auto& { return c.synth.test_fraction; })},
      {"dataset.channel", size_field([](auto& c) -> auto& { return c.channel; })},
      {"dataset.n_parts", size_field([](auto& c) -> auto& { return c.n_parts; })},
      {"dataset.expected_channels", size_field([](auto& c) -> auto& { return c.expected_channels; })},
      {"wavelet.omega0", double_field([](auto& c) -> auto& { return c.omega0; })},
      {"wavelet.f_min_hz", double_field([](auto& c) -> auto& { return c.f_min_hz; })},
      {"wavelet.f_max_hz", double_field([](auto& c) -> auto& { return c.f_max_hz; })},
      {"wavelet.n_scales", size_field([](auto& c) -> auto& { return c.n_scales; })},
      {"wavelet.image_size", size_field([](auto& c) -> auto& { return c.image_size; })},
      {"model.spec", string_field([](auto& c) -> auto& { return c.model_name; })},
      {"model.seed", size_field([](auto& c) -> auto& { return c.model_seed; })},
      {"training.epochs", size_field([](auto& c) -> auto& { return c.epochs; })},
      {"training.batch_size", size_field([](auto& c) -> auto& { return c.batch_size; })},
      {"training.lr", double_field([](auto& c) -> auto& { return c.lr; })},
      {"training.lr_decay", double_field([](auto& c) -> auto& { return c.lr_decay; })},
      {"training.lr_milestones",
       {[](RunConfig& c, const std::string& k, const std::string& v) {
          c.lr_milestones.clear();
          std::istringstream ss(v);
          std::string item;
          while (std::getline(ss, item, ',')) {
            item = trim(item);
            if (!item.empty()) c.lr_milestones.push_back(to_double(k, item));
          }
        },
        [](const RunConfig& c) {
          std::string out;
          for (std::size_t i = 0; i < c.lr_milestones.size(); ++i) out += (i ? "," : "") + fmt_double(c.lr_milestones[i]);
          return out;
        }}},
      {"training.momentum", double_field([](auto& c) -> auto& { return c.momentum; })},
      {"training.weight_decay", double_field([](auto& c) -> auto& { return c.weight_decay; })},
      {"training.seed", size_field([](auto& c) -> auto& { return c.training_seed; })},
  };
  return table;
}

const Field& field(const std::string& key) {
  for (const auto& [k, f] : fields())
    if (k == key) return f;
  throw Error(ErrorCode::BadConfig, "unknown config key '" + key + "'");
}

}  // namespace

std::string RunConfig::resolved_dataset_dir() const {
  return dataset_dir.empty() ? (std::filesystem::path(output_dir) / "data").string() : dataset_dir;
}

double RunConfig::resolved_f_max(double rate_hz) const { return f_max_hz > 0.0 ? f_max_hz : 0.45 * rate_hz; }

void RunConfig::validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::BadConfig, msg); };
  if (output_dir.empty()) fail("run.output_dir must be set");
  if (dataset_source != "synthetic" && dataset_source != "directory")
    fail("dataset.source must be 'synthetic' or 'directory'");
  if (dataset_source == "directory") {
    if (dataset_dir.empty()) fail("dataset.dir is required when dataset.source = directory");
    if (!std::filesystem::is_directory(dataset_dir)) fail("dataset.dir '" + dataset_dir + "' does not exist");
  }
  try {
    synth.validate();
  } catch (const Error& e) {
    fail(e.what());
  }
  if (!(synth.val_fraction >= 0.0) || !(synth.test_fraction >= 0.0) || !(synth.val_fraction + synth.test_fraction < 1.0))
    fail("dataset.val_fraction + dataset.test_fraction must be in [0, 1)");
  if (n_parts < 1) fail("dataset.n_parts must be at least 1");
  if (!(omega0 >= 5.0)) fail("wavelet.omega0 must be >= 5");
  if (!(f_min_hz > 0.0)) fail("wavelet.f_min_hz must be positive");
  if (f_max_hz != 0.0 && !(f_max_hz > f_min_hz)) fail("wavelet.f_max_hz must exceed wavelet.f_min_hz (or be 0)");
  if (n_scales < 2) fail("wavelet.n_scales must be at least 2");
  if (image_size < 1) fail("wavelet.image_size must be positive");
  try {
    ResNetSpec::named(model_name);
  } catch (const Error&) {
    fail("model.spec must be one of tiny, 18, 34, 50, 101");
  }
  if (batch_size < 1) fail("training.batch_size must be positive");
  if (!(lr >= 0.0)) fail("training.lr must be non-negative");
  if (!(lr_decay > 0.0)) fail("training.lr_decay must be positive");
  for (double m : lr_milestones)
    if (!(m >= 0.0 && m <= 1.0)) fail("training.lr_milestones entries must lie in [0, 1]");
  if (!(momentum >= 0.0 && momentum < 1.0)) fail("training.momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) fail("training.weight_decay must be non-negative");
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& [name, f] : fields()) k.push_back(name);
    return k;
  }();
  return keys;
}

void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
  field(key).set(cfg, key, value);
}

std::string get_config_value(const RunConfig& cfg, const std::string& key) { return field(key).get(cfg); }

RunConfig parse_config(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  std::map<std::string, std::size_t> seen;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw Error(ErrorCode::BadConfig, "line " + std::to_string(lineno) + ": expected 'section.key = value'");
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    if (auto [it, fresh] = seen.emplace(key, lineno); !fresh)
      throw Error(ErrorCode::BadConfig, "line " + std::to_string(lineno) + ": '" + key + "' already set on line " +
                                            std::to_string(it->second));
    try {
      set_config_value(cfg, key, value);
    } catch (const Error& e) {
      throw Error(ErrorCode::BadConfig, "line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return cfg;
}

std::string render_config(const RunConfig& cfg) {
  std::ostringstream os;
  std::string section;
  for (const auto& [key, f] : fields()) {
    const auto sec = key.substr(0, key.find('.'));
    if (sec != section) {
      if (!section.empty()) os << '\n';
      os << "# " << sec << '\n';
      section = sec;
    }
    os << key << " = " << f.get(cfg) << '\n';
  }
  return os.str();
}

RunConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::BadConfig, "cannot read config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

void apply_seed(RunConfig& cfg, std::uint64_t seed) {
  cfg.synth.master_seed = seed;
  cfg.model_seed = seed;
  cfg.training_seed = seed;
}

}  // namespace railwave
