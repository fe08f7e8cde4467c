#include "railwave/nn.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "railwave/error.hpp"

namespace railwave {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

void require_rank(const Tensor& t, std::size_t rank, const char* what) {
  if (t.rank() != rank)
    throw Error(ErrorCode::ShapeMismatch, std::string(what) + " expects rank " + std::to_string(rank) + ", got " +
                                              shape_string(t.shape()));
}

struct ConvGeometry {
  std::size_t n, c, h, w, k, kh, kw, oh, ow, stride, pad;
  std::size_t patch() const { return c * kh * kw; }
  std::size_t pixels() const { return oh * ow; }
};

ConvGeometry conv_geometry(const Tensor& input, const ConvParams& p) {
  require_rank(input, 4, "conv2d input");
  require_rank(p.kernels, 4, "conv2d kernels");
  if (p.stride == 0) throw Error(ErrorCode::ShapeMismatch, "conv2d stride must be positive");
  if (input.dim(1) != p.in_channels())
    throw Error(ErrorCode::ShapeMismatch, "conv2d input has " + std::to_string(input.dim(1)) +
                                              " channels, kernels expect " + std::to_string(p.in_channels()));
  if (p.bias && (p.bias->rank() != 1 || p.bias->dim(0) != p.out_channels()))
    throw Error(ErrorCode::ShapeMismatch, "conv2d bias shape");
  ConvGeometry g{input.dim(0), input.dim(1), input.dim(2), input.dim(3), p.out_channels(), p.kernels.dim(2),
                 p.kernels.dim(3), 0, 0, p.stride, p.padding};
  g.oh = conv_output_dim(g.h, g.kh, g.stride, g.pad);
  g.ow = conv_output_dim(g.w, g.kw, g.stride, g.pad);
  return g;
}

// cols[(c*kh + i)*kw + j][oy*ow + ox] = x[c][oy*s - pad + i][ox*s - pad + j], zero outside.
void im2col(const double* x, const ConvGeometry& g, double* cols) {
  for (std::size_t c = 0; c < g.c; ++c)
    for (std::size_t i = 0; i < g.kh; ++i)
      for (std::size_t j = 0; j < g.kw; ++j) {
        double* row = cols + ((c * g.kh + i) * g.kw + j) * g.pixels();
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + i) - static_cast<std::ptrdiff_t>(g.pad);
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + j) - static_cast<std::ptrdiff_t>(g.pad);
            const bool inside = iy >= 0 && ix >= 0 && iy < static_cast<std::ptrdiff_t>(g.h) &&
                                ix < static_cast<std::ptrdiff_t>(g.w);
            row[oy * g.ow + ox] = inside ? x[(c * g.h + iy) * g.w + ix] : 0.0;
          }
        }
      }
}

void col2im(const double* cols, const ConvGeometry& g, double* dx) {
  for (std::size_t c = 0; c < g.c; ++c)
    for (std::size_t i = 0; i < g.kh; ++i)
      for (std::size_t j = 0; j < g.kw; ++j) {
        const double* row = cols + ((c * g.kh + i) * g.kw + j) * g.pixels();
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + i) - static_cast<std::ptrdiff_t>(g.pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + j) - static_cast<std::ptrdiff_t>(g.pad);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w)) continue;
            dx[(c * g.h + iy) * g.w + ix] += row[oy * g.ow + ox];
          }
        }
      }
}

struct PoolGeometry {
  std::size_t n, c, h, w, oh, ow;
};

PoolGeometry pool_geometry(const Tensor& input, const PoolParams& p) {
  require_rank(input, 4, "pool2d input");
  if (p.window_h == 0 || p.window_w == 0 || p.stride == 0)
    throw Error(ErrorCode::ShapeMismatch, "pool2d window and stride must be positive");
  if (p.padding >= p.window_h || p.padding >= p.window_w)
    throw Error(ErrorCode::ShapeMismatch, "pool2d padding must be smaller than the window");
  PoolGeometry g{input.dim(0), input.dim(1), input.dim(2), input.dim(3), 0, 0};
  g.oh = conv_output_dim(g.h, p.window_h, p.stride, p.padding);
  g.ow = conv_output_dim(g.w, p.window_w, p.stride, p.padding);
  return g;
}

// Visits the in-bounds cells of pooling region (oy, ox) in row-major order.
template <typename F>
void for_region(const PoolGeometry& g, const PoolParams& p, std::size_t oy, std::size_t ox, F&& f) {
  const auto y0 = static_cast<std::ptrdiff_t>(oy * p.stride) - static_cast<std::ptrdiff_t>(p.padding);
  const auto x0 = static_cast<std::ptrdiff_t>(ox * p.stride) - static_cast<std::ptrdiff_t>(p.padding);
  for (std::ptrdiff_t y = std::max<std::ptrdiff_t>(y0, 0);
       y < std::min<std::ptrdiff_t>(y0 + static_cast<std::ptrdiff_t>(p.window_h), static_cast<std::ptrdiff_t>(g.h));
       ++y)
    for (std::ptrdiff_t x = std::max<std::ptrdiff_t>(x0, 0);
         x < std::min<std::ptrdiff_t>(x0 + static_cast<std::ptrdiff_t>(p.window_w), static_cast<std::ptrdiff_t>(g.w));
         ++x)
      f(static_cast<std::size_t>(y) * g.w + static_cast<std::size_t>(x));
}

std::size_t check_batchnorm_shapes(const Tensor& input, const BatchNormParams& p) {
  require_rank(input, 4, "batchnorm2d input");
  const std::size_t c = input.dim(1);
  if (p.gamma.size() != c || p.beta.size() != c || p.running_mean.size() != c || p.running_var.size() != c)
    throw Error(ErrorCode::ShapeMismatch, "batchnorm2d parameters do not match " + std::to_string(c) + " channels");
  if (!(p.epsilon > 0.0)) throw Error(ErrorCode::ShapeMismatch, "batchnorm2d epsilon must be positive");
  return c;
}

Tensor apply_batchnorm(const Tensor& input, const BatchNormParams& p, std::span<const double> mean,
                       std::span<const double> inv_std) {
  const std::size_t n = input.dim(0), c = input.dim(1), hw = input.dim(2) * input.dim(3);
  Tensor out(input.shape());
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double scale = p.gamma[ch] * inv_std[ch];
      const double shift = p.beta[ch] - mean[ch] * scale;
      const std::size_t base = (b * c + ch) * hw;
      for (std::size_t i = 0; i < hw; ++i) out[base + i] = input[base + i] * scale + shift;
    }
  debug_check_finite(out, "batchnorm2d");
  return out;
}

}  // namespace

BatchNormParams BatchNormParams::identity(std::size_t channels) {
  BatchNormParams p;
  p.gamma = Tensor({channels}, 1.0);
  p.beta = Tensor({channels}, 0.0);
  p.running_mean = Tensor({channels}, 0.0);
  p.running_var = Tensor({channels}, 1.0);
  return p;
}

std::size_t conv_output_dim(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t padding) {
  const std::size_t padded = in + 2 * padding;
  if (stride == 0 || kernel == 0 || padded < kernel)
    throw Error(ErrorCode::NonPositiveOutputDim, "window " + std::to_string(kernel) + " does not fit extent " +
                                                     std::to_string(padded));
  return (padded - kernel) / stride + 1;
}

ConvParams make_conv(std::size_t in_ch, std::size_t out_ch, std::size_t kernel, std::size_t stride,
                     std::size_t padding, bool with_bias, std::mt19937_64& rng) {
  ConvParams p;
  p.kernels = Tensor({out_ch, in_ch, kernel, kernel});
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(in_ch * kernel * kernel)));
  for (auto& v : p.kernels.data()) v = dist(rng);
  if (with_bias) p.bias = Tensor({out_ch}, 0.0);
  p.stride = stride;
  p.padding = padding;
  return p;
}

LinearParams make_linear(std::size_t features, std::size_t classes, std::mt19937_64& rng) {
  LinearParams p;
  p.weight = Tensor({classes, features});
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(features)));
  for (auto& v : p.weight.data()) v = dist(rng);
  p.bias = Tensor({classes}, 0.0);
  return p;
}

Tensor conv2d(const Tensor& input, const ConvParams& p) {
  const auto g = conv_geometry(input, p);
  Tensor out({g.n, g.k, g.oh, g.ow});
  std::vector<double> cols(g.patch() * g.pixels());
  ConstMatrixMap weights(p.kernels.data().data(), g.k, g.patch());
  for (std::size_t n = 0; n < g.n; ++n) {
    im2col(input.data().data() + n * g.c * g.h * g.w, g, cols.data());
    MatrixMap y(out.data().data() + n * g.k * g.pixels(), g.k, g.pixels());
    y.noalias() = weights * ConstMatrixMap(cols.data(), g.patch(), g.pixels());
    if (p.bias)
      for (std::size_t k = 0; k < g.k; ++k) y.row(k).array() += (*p.bias)[k];
  }
  debug_check_finite(out, "conv2d");
  return out;
}

Tensor conv2d_backward(const Tensor& input, ConvParams& p, const Tensor& grad_out) {
  const auto g = conv_geometry(input, p);
  if (grad_out.shape() != Shape{g.n, g.k, g.oh, g.ow})
    throw Error(ErrorCode::ShapeMismatch, "conv2d upstream gradient " + shape_string(grad_out.shape()));
  Tensor grad_in(input.shape(), 0.0);
  std::vector<double> cols(g.patch() * g.pixels());
  std::vector<double> dcols(g.patch() * g.pixels());
  RowMatrix dw = RowMatrix::Zero(g.k, g.patch());
  std::vector<double> db(g.k, 0.0);
  ConstMatrixMap weights(p.kernels.data().data(), g.k, g.patch());
  for (std::size_t n = 0; n < g.n; ++n) {
    im2col(input.data().data() + n * g.c * g.h * g.w, g, cols.data());
    ConstMatrixMap dy(grad_out.data().data() + n * g.k * g.pixels(), g.k, g.pixels());
    dw.noalias() += dy * ConstMatrixMap(cols.data(), g.patch(), g.pixels()).transpose();
    MatrixMap(dcols.data(), g.patch(), g.pixels()).noalias() = weights.transpose() * dy;
    col2im(dcols.data(), g, grad_in.data().data() + n * g.c * g.h * g.w);
    for (std::size_t k = 0; k < g.k; ++k) db[k] += dy.row(k).sum();
  }
  p.kernels.accumulate_grad(std::span<const double>(dw.data(), static_cast<std::size_t>(dw.size())));
  if (p.bias) p.bias->accumulate_grad(db);
  return grad_in;
}

Tensor pool2d(const Tensor& input, const PoolParams& p, PoolCache* cache) {
  const auto g = pool_geometry(input, p);
  Tensor out({g.n, g.c, g.oh, g.ow});
  if (cache) cache->argmax.assign(out.size(), 0);
  const double* x = input.data().data();
  std::size_t o = 0;
  for (std::size_t plane = 0; plane < g.n * g.c; ++plane) {
    const double* xp = x + plane * g.h * g.w;
    for (std::size_t oy = 0; oy < g.oh; ++oy)
      for (std::size_t ox = 0; ox < g.ow; ++ox, ++o) {
        if (p.mode == PoolMode::Max) {
          double best = -std::numeric_limits<double>::infinity();
          std::size_t best_at = 0;
          bool any = false;
          // Strict '>' keeps the first maximum in row-major order.
          for_region(g, p, oy, ox, [&](std::size_t i) {
            if (!any || xp[i] > best) {
              best = xp[i];
              best_at = i;
              any = true;
            }
          });
          out[o] = best;
          if (cache) cache->argmax[o] = plane * g.h * g.w + best_at;
        } else {
          double sum = 0.0;
          std::size_t count = 0;
          for_region(g, p, oy, ox, [&](std::size_t i) {
            sum += xp[i];
            ++count;
          });
          out[o] = sum / static_cast<double>(count);
        }
      }
  }
  debug_check_finite(out, "pool2d");
  return out;
}

Tensor pool2d_backward(const Tensor& input, const PoolParams& p, const Tensor& grad_out, const PoolCache* cache) {
  const auto g = pool_geometry(input, p);
  if (grad_out.shape() != Shape{g.n, g.c, g.oh, g.ow})
    throw Error(ErrorCode::ShapeMismatch, "pool2d upstream gradient " + shape_string(grad_out.shape()));
  PoolCache local;
  if (p.mode == PoolMode::Max && cache == nullptr) {
    pool2d(input, p, &local);
    cache = &local;
  }
  Tensor grad_in(input.shape(), 0.0);
  std::size_t o = 0;
  for (std::size_t plane = 0; plane < g.n * g.c; ++plane) {
    double* dxp = grad_in.data().data() + plane * g.h * g.w;
    for (std::size_t oy = 0; oy < g.oh; ++oy)
      for (std::size_t ox = 0; ox < g.ow; ++ox, ++o) {
        if (p.mode == PoolMode::Max) {
          grad_in[cache->argmax[o]] += grad_out[o];
        } else {
          std::size_t count = 0;
          for_region(g, p, oy, ox, [&](std::size_t) { ++count; });
          const double share = grad_out[o] / static_cast<double>(count);
          for_region(g, p, oy, ox, [&](std::size_t i) { dxp[i] += share; });
        }
      }
  }
  return grad_in;
}

Tensor relu(const Tensor& input) {
  Tensor out = input;
  out.drop_grad();
  for (auto& v : out.data()) v = v > 0.0 ? v : 0.0;
  return out;
}

Tensor relu_backward(const Tensor& input, const Tensor& grad_out) {
  if (grad_out.shape() != input.shape()) throw Error(ErrorCode::ShapeMismatch, "relu upstream gradient");
  Tensor grad_in(input.shape(), 0.0);
  for (std::size_t i = 0; i < input.size(); ++i) grad_in[i] = input[i] > 0.0 ? grad_out[i] : 0.0;
  return grad_in;
}

Tensor batchnorm2d(const Tensor& input, BatchNormParams& p, bool training, BatchNormCache* cache) {
  const std::size_t c = check_batchnorm_shapes(input, p);
  const std::size_t n = input.dim(0), hw = input.dim(2) * input.dim(3);
  const std::size_t count = n * hw;
  if (training && count < 2)
    throw Error(ErrorCode::DegenerateBatch, "batch statistics need at least 2 values per channel");

  std::vector<double> mean(c), inv_std(c);
  for (std::size_t ch = 0; ch < c; ++ch) {
    if (!training) {
      mean[ch] = p.running_mean[ch];
      inv_std[ch] = 1.0 / std::sqrt(p.running_var[ch] + p.epsilon);
      continue;
    }
    double sum = 0.0;
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t i = 0; i < hw; ++i) sum += input[(b * c + ch) * hw + i];
    const double mu = sum / static_cast<double>(count);
    double sq = 0.0;
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t i = 0; i < hw; ++i) {
        const double d = input[(b * c + ch) * hw + i] - mu;
        sq += d * d;
      }
    mean[ch] = mu;
    inv_std[ch] = 1.0 / std::sqrt(sq / static_cast<double>(count) + p.epsilon);
    p.running_mean[ch] = (1.0 - p.momentum) * p.running_mean[ch] + p.momentum * mu;
    p.running_var[ch] = (1.0 - p.momentum) * p.running_var[ch] + p.momentum * sq / static_cast<double>(count - 1);
  }

  Tensor out = apply_batchnorm(input, p, mean, inv_std);
  if (cache) *cache = BatchNormCache{std::move(mean), std::move(inv_std), training};
  return out;
}

Tensor batchnorm2d_inference(const Tensor& input, const BatchNormParams& p) {
  const std::size_t c = check_batchnorm_shapes(input, p);
  std::vector<double> inv_std(c);
  for (std::size_t ch = 0; ch < c; ++ch) inv_std[ch] = 1.0 / std::sqrt(p.running_var[ch] + p.epsilon);
  return apply_batchnorm(input, p, p.running_mean.data(), inv_std);
}

Tensor batchnorm2d_backward(const Tensor& input, BatchNormParams& p, const BatchNormCache& cache,
                            const Tensor& grad_out) {
  require_rank(input, 4, "batchnorm2d input");
  if (grad_out.shape() != input.shape()) throw Error(ErrorCode::ShapeMismatch, "batchnorm2d upstream gradient");
  const std::size_t n = input.dim(0), c = input.dim(1), hw = input.dim(2) * input.dim(3);
  const double count = static_cast<double>(n * hw);
  Tensor grad_in(input.shape(), 0.0);
  std::vector<double> dgamma(c, 0.0), dbeta(c, 0.0);
  for (std::size_t ch = 0; ch < c; ++ch) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (std::size_t b = 0; b < n; ++b) {
      const std::size_t base = (b * c + ch) * hw;
      for (std::size_t i = 0; i < hw; ++i) {
        const double xhat = (input[base + i] - cache.mean[ch]) * cache.inv_std[ch];
        sum_dy += grad_out[base + i];
        sum_dy_xhat += grad_out[base + i] * xhat;
      }
    }
    dgamma[ch] = sum_dy_xhat;
    dbeta[ch] = sum_dy;
    const double g = p.gamma[ch] * cache.inv_std[ch];
    for (std::size_t b = 0; b < n; ++b) {
      const std::size_t base = (b * c + ch) * hw;
      for (std::size_t i = 0; i < hw; ++i) {
        if (cache.training) {
          const double xhat = (input[base + i] - cache.mean[ch]) * cache.inv_std[ch];
          grad_in[base + i] = g * (grad_out[base + i] - sum_dy / count - xhat * sum_dy_xhat / count);
        } else {
          grad_in[base + i] = g * grad_out[base + i];
        }
      }
    }
  }
  p.gamma.accumulate_grad(dgamma);
  p.beta.accumulate_grad(dbeta);
  return grad_in;
}

Tensor linear(const Tensor& input, const LinearParams& p) {
  require_rank(input, 2, "linear input");
  require_rank(p.weight, 2, "linear weight");
  const std::size_t n = input.dim(0), f = input.dim(1), k = p.weight.dim(0);
  if (p.weight.dim(1) != f || p.bias.size() != k)
    throw Error(ErrorCode::ShapeMismatch, "linear: input " + shape_string(input.shape()) + " vs weight " +
                                              shape_string(p.weight.shape()));
  Tensor out({n, k});
  MatrixMap y(out.data().data(), n, k);
  y.noalias() = ConstMatrixMap(input.data().data(), n, f) * ConstMatrixMap(p.weight.data().data(), k, f).transpose();
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t j = 0; j < k; ++j) y(r, j) += p.bias[j];
  debug_check_finite(out, "linear");
  return out;
}

Tensor linear_backward(const Tensor& input, LinearParams& p, const Tensor& grad_out) {
  const std::size_t n = input.dim(0), f = input.dim(1), k = p.weight.dim(0);
  if (grad_out.shape() != Shape{n, k}) throw Error(ErrorCode::ShapeMismatch, "linear upstream gradient");
  ConstMatrixMap dy(grad_out.data().data(), n, k);
  RowMatrix dw = dy.transpose() * ConstMatrixMap(input.data().data(), n, f);
  Eigen::VectorXd db = dy.colwise().sum().transpose();
  p.weight.accumulate_grad(std::span<const double>(dw.data(), static_cast<std::size_t>(dw.size())));
  p.bias.accumulate_grad(std::span<const double>(db.data(), static_cast<std::size_t>(db.size())));
  Tensor grad_in({n, f});
  MatrixMap(grad_in.data().data(), n, f).noalias() = dy * ConstMatrixMap(p.weight.data().data(), k, f);
  return grad_in;
}

SoftmaxCE softmax_cross_entropy(const Tensor& logits, std::span<const int> labels) {
  require_rank(logits, 2, "softmax logits");
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  if (labels.size() != n) throw Error(ErrorCode::ShapeMismatch, "label count does not match batch");
  SoftmaxCE out{0.0, Tensor({n, k})};
  for (std::size_t r = 0; r < n; ++r) {
    if (labels[r] < 0 || static_cast<std::size_t>(labels[r]) >= k)
      throw Error(ErrorCode::BadLabel, "label " + std::to_string(labels[r]) + " outside [0," + std::to_string(k) + ")");
    const double* z = logits.data().data() + r * k;
    const double zmax = *std::max_element(z, z + k);
    double denom = 0.0;
    for (std::size_t j = 0; j < k; ++j) denom += std::exp(z[j] - zmax);
    for (std::size_t j = 0; j < k; ++j) out.probabilities[r * k + j] = std::exp(z[j] - zmax) / denom;
    out.loss += std::log(denom) - (z[labels[r]] - zmax);
  }
  out.loss /= static_cast<double>(n);
  return out;
}

Tensor softmax_cross_entropy_backward(const SoftmaxCE& forward, std::span<const int> labels) {
  const std::size_t n = forward.probabilities.dim(0), k = forward.probabilities.dim(1);
  Tensor grad = forward.probabilities;
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t r = 0; r < n; ++r) {
    grad[r * k + static_cast<std::size_t>(labels[r])] -= 1.0;
    for (std::size_t j = 0; j < k; ++j) grad[r * k + j] *= inv_n;
  }
  return grad;
}

void Sgd::step(std::span<Tensor* const> params, double lr) {
  if (velocity_.size() != params.size()) {
    velocity_.clear();
    for (const Tensor* p : params) velocity_.emplace_back(p->shape(), 0.0);
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    if (!p.has_grad()) throw Error(ErrorCode::MissingGradient, "parameter " + std::to_string(i) + " has no gradient");
    if (velocity_[i].size() != p.size()) throw Error(ErrorCode::ShapeMismatch, "optimizer state shape");
    auto v = velocity_[i].data();
    auto w = p.data();
    auto g = p.grad();
    for (std::size_t j = 0; j < w.size(); ++j) {
      v[j] = momentum_ * v[j] + g[j] + weight_decay_ * w[j];
      w[j] -= lr * v[j];
    }
  }
}

GradCheckReport grad_check(const std::function<double()>& objective, const std::function<void()>& analytic,
                           std::span<Tensor* const> wrt, const GradCheckOptions& options) {
  GradCheckReport report;
  for (Tensor* t : wrt) t->zero_grad();
  analytic();
  std::vector<std::vector<double>> grads;
  for (Tensor* t : wrt) grads.emplace_back(t->grad().begin(), t->grad().end());

  std::mt19937_64 rng(options.seed);
  auto central = [&](Tensor& t, std::span<const double> dir, double h) {
    std::vector<double> saved(t.data().begin(), t.data().end());
    for (std::size_t i = 0; i < dir.size(); ++i) t[i] = saved[i] + h * dir[i];
    const double up = objective();
    for (std::size_t i = 0; i < dir.size(); ++i) t[i] = saved[i] - h * dir[i];
    const double down = objective();
    std::copy(saved.begin(), saved.end(), t.data().begin());
    return (up - down) / (2.0 * h);
  };
  auto rel_error = [&](double a, double b) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), options.abs_floor});
  };
  auto compare = [&](const std::string& label, double analytic_value, Tensor& t, std::span<const double> dir) {
    const double numeric = central(t, dir, options.step);
    if (options.skip_kinks) {
      const double finer = central(t, dir, options.step / 4.0);
      if (rel_error(numeric, finer) > options.tolerance) {
        ++report.skipped;
        return;
      }
    }
    const double err = rel_error(analytic_value, numeric);
    ++report.checked;
    report.max_rel_error = std::max(report.max_rel_error, err);
    if (!(err <= options.tolerance))
      report.failures.push_back(label + ": analytic " + std::to_string(analytic_value) + " numeric " +
                                std::to_string(numeric));
  };

  for (std::size_t ti = 0; ti < wrt.size(); ++ti) {
    Tensor& t = *wrt[ti];
    std::vector<std::size_t> coords(t.size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (coords.size() > options.max_elements_per_tensor) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(options.max_elements_per_tensor);
    }
    std::vector<double> dir(t.size(), 0.0);
    for (auto i : coords) {
      dir[i] = 1.0;
      compare("tensor " + std::to_string(ti) + " element " + std::to_string(i), grads[ti][i], t, dir);
      dir[i] = 0.0;
    }
    // Directional derivative along a random unit vector exercises every coordinate at once.
    std::normal_distribution<double> normal(0.0, 1.0);
    double norm = 0.0;
    for (auto& d : dir) {
      d = normal(rng);
      norm += d * d;
    }
    norm = std::sqrt(norm);
    double jvp = 0.0;
    for (std::size_t i = 0; i < dir.size(); ++i) {
      dir[i] /= norm;
      jvp += dir[i] * grads[ti][i];
    }
    compare("tensor " + std::to_string(ti) + " random direction", jvp, t, dir);
  }
  return report;
}

}  // namespace railwave
