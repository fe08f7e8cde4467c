#pragma once

// Residual blocks and the ResNet family assembled from the nn layer set.

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "railwave/nn.hpp"

namespace railwave {

enum class BlockKind { Basic, Bottleneck };

inline constexpr std::size_t kBottleneckExpansion = 4;

struct ResNetSpec {
  std::size_t stem_channels = 16;
  std::vector<std::size_t> stage_block_counts = {1, 1, 1, 1};
  BlockKind block_kind = BlockKind::Basic;
  std::size_t num_classes = 17;
  std::size_t input_channels = 1;
  std::size_t input_height = 64;
  std::size_t input_width = 64;

  /// Named layouts: tiny, 18, 34, 50 (and 101).
  static ResNetSpec named(const std::string& name);

  void validate() const;
  /// Single-line canonical text, e.g. "kind=basic;stem=16;stages=1,1,1,1;classes=17;input=1x64x64".
  std::string canonical() const;
  static ResNetSpec parse(const std::string& text);

  friend bool operator==(const ResNetSpec&, const ResNetSpec&) = default;
};

struct NamedTensor {
  std::string name;
  Tensor* tensor;
};

/// conv -> batchnorm -> optional relu, with the activations kept for backward.
struct ConvBnUnit {
  ConvParams conv;
  BatchNormParams bn;
  bool relu_after = true;

  Tensor conv_in, bn_in, relu_in;
  BatchNormCache bn_cache;

  Tensor forward(const Tensor& x, bool training);
  Tensor infer(const Tensor& x) const;
  Tensor backward(const Tensor& grad_out);
};

/// y = relu(F(x, W) + x), or relu(F(x, W) + W_s x) with a 1x1 projection when the channel
/// count or the spatial stride changes.
class ResidualBlock {
 public:
  ResidualBlock(BlockKind kind, std::size_t in_channels, std::size_t width, std::size_t stride, std::mt19937_64& rng);

  Tensor forward(const Tensor& x, bool training);
  Tensor infer(const Tensor& x) const;
  Tensor backward(const Tensor& grad_out);

  BlockKind kind() const { return kind_; }
  std::size_t in_channels() const { return in_channels_; }
  std::size_t out_channels() const { return out_channels_; }
  std::size_t stride() const { return stride_; }
  bool has_projection() const { return projection_.has_value(); }

  std::vector<ConvBnUnit>& path() { return path_; }
  const std::vector<ConvBnUnit>& path() const { return path_; }
  std::optional<ConvParams>& projection() { return projection_; }
  const std::optional<ConvParams>& projection() const { return projection_; }

  /// F(x, W) and the shortcut term from the most recent forward().
  const Tensor& residual_output() const { return residual_; }
  const Tensor& shortcut_output() const { return shortcut_; }

  void collect(const std::string& prefix, std::vector<NamedTensor>& params, std::vector<NamedTensor>& buffers);

 private:
  BlockKind kind_;
  std::size_t in_channels_, out_channels_, stride_;
  std::vector<ConvBnUnit> path_;
  std::optional<ConvParams> projection_;

  Tensor input_, residual_, shortcut_, sum_;
};

/// stem conv 7x7/2 -> bn -> relu -> max pool 3x3/2 -> stages -> global average pool -> linear.
class Model {
 public:
  Model(const ResNetSpec& spec, std::uint64_t seed);

  const ResNetSpec& spec() const { return spec_; }

  bool training() const { return training_; }
  void set_training(bool on) { training_ = on; }

  /// Logits [N x classes]; records activations for backward().
  Tensor forward(const Tensor& batch);
  /// Eval-mode forward that touches no state; safe to call concurrently.
  Tensor infer(const Tensor& batch) const;
  /// Returns d(loss)/d(input); parameter gradients accumulate in place.
  Tensor backward(const Tensor& grad_logits);

  /// Runs stage `s` block by block, optionally recording each block output.
  Tensor forward_stage(std::size_t s, const Tensor& x, std::vector<Tensor>* block_outputs = nullptr);

  std::vector<NamedTensor> parameters();
  std::vector<NamedTensor> buffers();
  /// Parameters followed by buffers, in a stable order.
  std::vector<NamedTensor> state();

  void zero_grad();
  std::size_t parameter_count() const;
  /// Stem conv + convolutions on residual paths + classifier; projections are not counted.
  std::size_t weighted_layer_count() const;

  ConvBnUnit& stem() { return stem_; }
  std::vector<std::vector<ResidualBlock>>& stages() { return stages_; }
  LinearParams& classifier() { return fc_; }

 private:
  void check_input(const Tensor& batch) const;

  ResNetSpec spec_;
  bool training_ = true;
  ConvBnUnit stem_;
  PoolParams stem_pool_{3, 3, 2, 1, PoolMode::Max};
  std::vector<std::vector<ResidualBlock>> stages_;
  LinearParams fc_;

  Tensor pool_in_, gap_in_, fc_in_;
  PoolCache pool_cache_;
};

}  // namespace railwave
