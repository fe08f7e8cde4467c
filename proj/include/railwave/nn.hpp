#pragma once

// Layer set for the residual network: forward passes plus exact analytic backward passes.
//
// Backward functions take the forward input and the upstream gradient, accumulate parameter
// gradients into the parameter tensors' grad buffers, and return the gradient w.r.t. the input.

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "railwave/tensor.hpp"

namespace railwave {

struct ConvParams {
  Tensor kernels;               // [out_ch x in_ch x kh x kw]
  std::optional<Tensor> bias;   // [out_ch]
  std::size_t stride = 1;
  std::size_t padding = 0;

  std::size_t out_channels() const { return kernels.dim(0); }
  std::size_t in_channels() const { return kernels.dim(1); }
};

enum class PoolMode { Max, Average };

struct PoolParams {
  std::size_t window_h = 2;
  std::size_t window_w = 2;
  std::size_t stride = 2;
  std::size_t padding = 0;
  PoolMode mode = PoolMode::Max;
};

struct LinearParams {
  Tensor weight;  // [classes x features]
  Tensor bias;    // [classes]
};

struct BatchNormParams {
  Tensor gamma, beta;
  Tensor running_mean, running_var;
  double epsilon = 1e-5;
  double momentum = 0.1;

  static BatchNormParams identity(std::size_t channels);
};

/// Kaiming fan-in normal initialization, optional zero bias.
ConvParams make_conv(std::size_t in_ch, std::size_t out_ch, std::size_t kernel, std::size_t stride,
                     std::size_t padding, bool with_bias, std::mt19937_64& rng);
LinearParams make_linear(std::size_t features, std::size_t classes, std::mt19937_64& rng);

std::size_t conv_output_dim(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t padding);

// Cross-correlation (no kernel flip) plus bias.
Tensor conv2d(const Tensor& input, const ConvParams& p);
Tensor conv2d_backward(const Tensor& input, ConvParams& p, const Tensor& grad_out);

/// Max-pool argmax indices (flat offsets into the input), one per output element.
struct PoolCache {
  std::vector<std::size_t> argmax;
};

Tensor pool2d(const Tensor& input, const PoolParams& p, PoolCache* cache = nullptr);
Tensor pool2d_backward(const Tensor& input, const PoolParams& p, const Tensor& grad_out,
                       const PoolCache* cache = nullptr);

Tensor relu(const Tensor& input);
Tensor relu_backward(const Tensor& input, const Tensor& grad_out);

/// Saved batch statistics needed by the backward pass.
struct BatchNormCache {
  std::vector<double> mean, inv_std;
  bool training = false;
};

Tensor batchnorm2d(const Tensor& input, BatchNormParams& p, bool training, BatchNormCache* cache = nullptr);
/// Eval-mode normalization with running statistics; leaves the parameters untouched.
Tensor batchnorm2d_inference(const Tensor& input, const BatchNormParams& p);
Tensor batchnorm2d_backward(const Tensor& input, BatchNormParams& p, const BatchNormCache& cache,
                            const Tensor& grad_out);

Tensor linear(const Tensor& input, const LinearParams& p);
Tensor linear_backward(const Tensor& input, LinearParams& p, const Tensor& grad_out);

struct SoftmaxCE {
  double loss = 0.0;
  Tensor probabilities;  // [N x K]
};

SoftmaxCE softmax_cross_entropy(const Tensor& logits, std::span<const int> labels);
/// (p - onehot) / N
Tensor softmax_cross_entropy_backward(const SoftmaxCE& forward, std::span<const int> labels);

/// v <- momentum*v + grad + weight_decay*param;  param <- param - lr*v
class Sgd {
 public:
  Sgd(double momentum, double weight_decay) : momentum_(momentum), weight_decay_(weight_decay) {}

  void step(std::span<Tensor* const> params, double lr);

  std::vector<Tensor>& velocity() { return velocity_; }
  const std::vector<Tensor>& velocity() const { return velocity_; }
  double momentum() const { return momentum_; }
  double weight_decay() const { return weight_decay_; }

 private:
  double momentum_;
  double weight_decay_;
  std::vector<Tensor> velocity_;
};

struct GradCheckOptions {
  double step = 1e-3;
  double tolerance = 1e-4;
  // Denominator floor for the relative error, so exact zeros compare absolutely.
  double abs_floor = 1e-6;
  std::size_t max_elements_per_tensor = 48;
  std::uint64_t seed = 0;
  // Re-evaluate each numeric derivative at step/4 and skip coordinates where the two disagree,
  // which only happens when the perturbation straddles a kink (relu at 0, max-pool ties).
  bool skip_kinks = false;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;
  std::vector<std::string> failures;

  bool passed() const { return failures.empty() && checked > 0; }
};

/// Compares analytic gradients against central differences.
/// `objective` evaluates the scalar at the current tensor values; `analytic` must run the
/// forward and backward pass and leave d(objective)/d(tensor) in each tensor's grad buffer
/// (grads are zeroed by the harness first). Checks sampled coordinates plus one random direction
/// per tensor.
GradCheckReport grad_check(const std::function<double()>& objective, const std::function<void()>& analytic,
                           std::span<Tensor* const> wrt, const GradCheckOptions& options = {});

}  // namespace railwave
