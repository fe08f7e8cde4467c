#include "railwave/resnet.hpp"

#include <algorithm>
#include <charconv>
#include <sstream>

#include "railwave/error.hpp"

namespace railwave {

namespace {

ConvBnUnit make_unit(std::size_t in_ch, std::size_t out_ch, std::size_t kernel, std::size_t stride,
                     std::size_t padding, bool relu_after, std::mt19937_64& rng) {
  ConvBnUnit u;
  u.conv = make_conv(in_ch, out_ch, kernel, stride, padding, false, rng);
  u.bn = BatchNormParams::identity(out_ch);
  u.relu_after = relu_after;
  return u;
}

void collect_unit(const std::string& prefix, ConvBnUnit& u, std::vector<NamedTensor>& params,
                  std::vector<NamedTensor>& buffers) {
  params.push_back({prefix + ".conv.weight", &u.conv.kernels});
  if (u.conv.bias) params.push_back({prefix + ".conv.bias", &*u.conv.bias});
  params.push_back({prefix + ".bn.gamma", &u.bn.gamma});
  params.push_back({prefix + ".bn.beta", &u.bn.beta});
  buffers.push_back({prefix + ".bn.running_mean", &u.bn.running_mean});
  buffers.push_back({prefix + ".bn.running_var", &u.bn.running_var});
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw Error(ErrorCode::ShapeMismatch, "residual sum of " + shape_string(a.shape()) + " and " + shape_string(b.shape()));
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

Tensor global_average_pool(const Tensor& x) {
  Tensor pooled = pool2d(x, PoolParams{x.dim(2), x.dim(3), 1, 0, PoolMode::Average});
  pooled.reshape({x.dim(0), x.dim(1)});
  return pooled;
}

Tensor global_average_pool_backward(const Tensor& x, const Tensor& grad_out) {
  Tensor g = grad_out;
  g.reshape({x.dim(0), x.dim(1), 1, 1});
  return pool2d_backward(x, PoolParams{x.dim(2), x.dim(3), 1, 0, PoolMode::Average}, g);
}

std::vector<std::size_t> parse_counts(const std::string& s) {
  std::vector<std::size_t> out;
  std::istringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t v = 0;
    auto [p, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (ec != std::errc() || p != item.data() + item.size()) throw Error(ErrorCode::BadSpec, "bad count '" + item + "'");
    out.push_back(v);
  }
  return out;
}

std::size_t parse_size(const std::string& s) {
  auto v = parse_counts(s);
  if (v.size() != 1) throw Error(ErrorCode::BadSpec, "expected one integer, got '" + s + "'");
  return v[0];
}

}  // namespace

ResNetSpec ResNetSpec::named(const std::string& name) {
  ResNetSpec s;
  if (name == "tiny") return s;
  s.stem_channels = 64;
  if (name == "18") {
    s.stage_block_counts = {2, 2, 2, 2};
  } else if (name == "34") {
    s.stage_block_counts = {3, 4, 6, 3};
  } else if (name == "50") {
    s.stage_block_counts = {3, 4, 6, 3};
    s.block_kind = BlockKind::Bottleneck;
  } else if (name == "101") {
    s.stage_block_counts = {3, 4, 23, 3};
    s.block_kind = BlockKind::Bottleneck;
  } else {
    throw Error(ErrorCode::BadSpec, "unknown model '" + name + "' (expected tiny, 18, 34, 50 or 101)");
  }
  return s;
}

void ResNetSpec::validate() const {
  if (stem_channels == 0) throw Error(ErrorCode::BadSpec, "stem_channels must be positive");
  if (stage_block_counts.empty()) throw Error(ErrorCode::BadSpec, "at least one stage is required");
  for (auto c : stage_block_counts)
    if (c == 0) throw Error(ErrorCode::BadSpec, "every stage needs at least one block");
  if (num_classes < 2) throw Error(ErrorCode::BadSpec, "need at least two classes");
  if (input_channels == 0 || input_height == 0 || input_width == 0)
    throw Error(ErrorCode::BadSpec, "input shape must be positive");
}

std::string ResNetSpec::canonical() const {
  std::ostringstream os;
  os << "kind=" << (block_kind == BlockKind::Basic ? "basic" : "bottleneck") << ";stem=" << stem_channels
     << ";stages=";
  for (std::size_t i = 0; i < stage_block_counts.size(); ++i) os << (i ? "," : "") << stage_block_counts[i];
  os << ";classes=" << num_classes << ";input=" << input_channels << 'x' << input_height << 'x' << input_width;
  return os.str();
}

ResNetSpec ResNetSpec::parse(const std::string& text) {
  ResNetSpec s;
  std::istringstream ss(text);
  std::string field;
  int seen = 0;
  while (std::getline(ss, field, ';')) {
    auto eq = field.find('=');
    if (eq == std::string::npos) throw Error(ErrorCode::BadSpec, "field without '=': " + field);
    const auto key = field.substr(0, eq), value = field.substr(eq + 1);
    if (key == "kind") {
      if (value == "basic")
        s.block_kind = BlockKind::Basic;
      else if (value == "bottleneck")
        s.block_kind = BlockKind::Bottleneck;
      else
        throw Error(ErrorCode::BadSpec, "unknown block kind " + value);
    } else if (key == "stem") {
      s.stem_channels = parse_size(value);
    } else if (key == "stages") {
      s.stage_block_counts = parse_counts(value);
    } else if (key == "classes") {
      s.num_classes = parse_size(value);
    } else if (key == "input") {
      std::string v = value;
      std::replace(v.begin(), v.end(), 'x', ',');
      auto dims = parse_counts(v);
      if (dims.size() != 3) throw Error(ErrorCode::BadSpec, "input must be CxHxW");
      s.input_channels = dims[0];
      s.input_height = dims[1];
      s.input_width = dims[2];
    } else {
      throw Error(ErrorCode::BadSpec, "unknown spec field " + key);
    }
    ++seen;
  }
  if (seen != 5) throw Error(ErrorCode::BadSpec, "spec text must carry exactly 5 fields: " + text);
  s.validate();
  return s;
}

Tensor ConvBnUnit::forward(const Tensor& x, bool training) {
  conv_in = x;
  bn_in = conv2d(x, conv);
  Tensor y = batchnorm2d(bn_in, bn, training, &bn_cache);
  if (!relu_after) return y;
  relu_in = std::move(y);
  return relu(relu_in);
}

Tensor ConvBnUnit::infer(const Tensor& x) const {
  Tensor y = batchnorm2d_inference(conv2d(x, conv), bn);
  return relu_after ? relu(y) : y;
}

Tensor ConvBnUnit::backward(const Tensor& grad_out) {
  Tensor g = relu_after ? relu_backward(relu_in, grad_out) : grad_out;
  g = batchnorm2d_backward(bn_in, bn, bn_cache, g);
  return conv2d_backward(conv_in, conv, g);
}

ResidualBlock::ResidualBlock(BlockKind kind, std::size_t in_channels, std::size_t width, std::size_t stride,
                             std::mt19937_64& rng)
    : kind_(kind), in_channels_(in_channels), stride_(stride) {
  if (kind == BlockKind::Basic) {
    out_channels_ = width;
    path_.push_back(make_unit(in_channels, width, 3, stride, 1, true, rng));
    path_.push_back(make_unit(width, width, 3, 1, 1, false, rng));
  } else {
    out_channels_ = width * kBottleneckExpansion;
    path_.push_back(make_unit(in_channels, width, 1, 1, 0, true, rng));
    path_.push_back(make_unit(width, width, 3, stride, 1, true, rng));
    path_.push_back(make_unit(width, out_channels_, 1, 1, 0, false, rng));
  }
  if (in_channels_ != out_channels_ || stride_ > 1)
    projection_ = make_conv(in_channels_, out_channels_, 1, stride_, 0, false, rng);
}

Tensor ResidualBlock::forward(const Tensor& x, bool training) {
  input_ = x;
  Tensor f = x;
  for (auto& unit : path_) f = unit.forward(f, training);
  residual_ = std::move(f);
  shortcut_ = projection_ ? conv2d(x, *projection_) : x;
  sum_ = add(residual_, shortcut_);
  return relu(sum_);
}

Tensor ResidualBlock::infer(const Tensor& x) const {
  Tensor f = x;
  for (const auto& unit : path_) f = unit.infer(f);
  return relu(add(f, projection_ ? conv2d(x, *projection_) : x));
}

Tensor ResidualBlock::backward(const Tensor& grad_out) {
  const Tensor g = relu_backward(sum_, grad_out);
  Tensor gf = g;
  for (auto it = path_.rbegin(); it != path_.rend(); ++it) gf = it->backward(gf);
  Tensor gs = projection_ ? conv2d_backward(input_, *projection_, g) : g;
  return add(gf, gs);
}

void ResidualBlock::collect(const std::string& prefix, std::vector<NamedTensor>& params,
                            std::vector<NamedTensor>& buffers) {
  for (std::size_t i = 0; i < path_.size(); ++i)
    collect_unit(prefix + ".unit" + std::to_string(i + 1), path_[i], params, buffers);
  if (projection_) params.push_back({prefix + ".projection.weight", &projection_->kernels});
}

Model::Model(const ResNetSpec& spec, std::uint64_t seed) : spec_(spec) {
  spec_.validate();
  std::mt19937_64 rng(seed);
  stem_ = make_unit(spec_.input_channels, spec_.stem_channels, 7, 2, 3, true, rng);
  std::size_t channels = spec_.stem_channels;
  for (std::size_t s = 0; s < spec_.stage_block_counts.size(); ++s) {
    const std::size_t width = spec_.stem_channels << s;
    std::vector<ResidualBlock> blocks;
    for (std::size_t b = 0; b < spec_.stage_block_counts[s]; ++b) {
      blocks.emplace_back(spec_.block_kind, channels, width, (b == 0 && s > 0) ? 2 : 1, rng);
      channels = blocks.back().out_channels();
    }
    stages_.push_back(std::move(blocks));
  }
  fc_ = make_linear(channels, spec_.num_classes, rng);
}

void Model::check_input(const Tensor& batch) const {
  if (batch.rank() != 4 || batch.dim(1) != spec_.input_channels || batch.dim(2) != spec_.input_height ||
      batch.dim(3) != spec_.input_width)
    throw Error(ErrorCode::ShapeMismatch, "model expects Nx" + std::to_string(spec_.input_channels) + "x" +
                                              std::to_string(spec_.input_height) + "x" +
                                              std::to_string(spec_.input_width) + ", got " +
                                              shape_string(batch.shape()));
}

Tensor Model::forward(const Tensor& batch) {
  check_input(batch);
  pool_in_ = stem_.forward(batch, training_);
  Tensor x = pool2d(pool_in_, stem_pool_, &pool_cache_);
  for (auto& stage : stages_)
    for (auto& block : stage) x = block.forward(x, training_);
  gap_in_ = std::move(x);
  fc_in_ = global_average_pool(gap_in_);
  return linear(fc_in_, fc_);
}

Tensor Model::infer(const Tensor& batch) const {
  check_input(batch);
  Tensor x = pool2d(stem_.infer(batch), stem_pool_);
  for (const auto& stage : stages_)
    for (const auto& block : stage) x = block.infer(x);
  return linear(global_average_pool(x), fc_);
}

Tensor Model::backward(const Tensor& grad_logits) {
  Tensor g = linear_backward(fc_in_, fc_, grad_logits);
  g = global_average_pool_backward(gap_in_, g);
  for (auto s = stages_.rbegin(); s != stages_.rend(); ++s)
    for (auto b = s->rbegin(); b != s->rend(); ++b) g = b->backward(g);
  g = pool2d_backward(pool_in_, stem_pool_, g, &pool_cache_);
  return stem_.backward(g);
}

Tensor Model::forward_stage(std::size_t s, const Tensor& x, std::vector<Tensor>* block_outputs) {
  Tensor y = x;
  for (auto& block : stages_.at(s)) {
    y = block.forward(y, training_);
    if (block_outputs) block_outputs->push_back(y);
  }
  return y;
}

std::vector<NamedTensor> Model::parameters() {
  std::vector<NamedTensor> params, buffers;
  collect_unit("stem", stem_, params, buffers);
  for (std::size_t s = 0; s < stages_.size(); ++s)
    for (std::size_t b = 0; b < stages_[s].size(); ++b)
      stages_[s][b].collect("stage" + std::to_string(s + 1) + ".block" + std::to_string(b), params, buffers);
  params.push_back({"fc.weight", &fc_.weight});
  params.push_back({"fc.bias", &fc_.bias});
  return params;
}

std::vector<NamedTensor> Model::buffers() {
  std::vector<NamedTensor> params, buffers;
  collect_unit("stem", stem_, params, buffers);
  for (std::size_t s = 0; s < stages_.size(); ++s)
    for (std::size_t b = 0; b < stages_[s].size(); ++b)
      stages_[s][b].collect("stage" + std::to_string(s + 1) + ".block" + std::to_string(b), params, buffers);
  return buffers;
}

std::vector<NamedTensor> Model::state() {
  auto all = parameters();
  auto bufs = buffers();
  all.insert(all.end(), bufs.begin(), bufs.end());
  return all;
}

void Model::zero_grad() {
  for (auto& p : parameters()) p.tensor->zero_grad();
}

std::size_t Model::parameter_count() const {
  auto unit_size = [](const ConvBnUnit& u) {
    return u.conv.kernels.size() + (u.conv.bias ? u.conv.bias->size() : 0) + u.bn.gamma.size() + u.bn.beta.size();
  };
  std::size_t n = unit_size(stem_) + fc_.weight.size() + fc_.bias.size();
  for (const auto& stage : stages_)
    for (const auto& block : stage) {
      for (const auto& u : block.path()) n += unit_size(u);
      if (block.projection()) n += block.projection()->kernels.size();
    }
  return n;
}

std::size_t Model::weighted_layer_count() const {
  std::size_t n = 2;
  for (const auto& stage : stages_)
    for (const auto& block : stage) n += block.path().size();
  return n;
}

}  // namespace railwave
