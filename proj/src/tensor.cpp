#include "railwave/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

#include "railwave/error.hpp"

namespace railwave {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {
  for (auto d : shape_)
    if (d == 0) throw Error(ErrorCode::ShapeMismatch, "zero-sized dimension in " + shape_string(shape_));
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_size(shape_) != data_.size())
    throw Error(ErrorCode::ShapeMismatch, shape_string(shape_) + " does not hold " + std::to_string(data_.size()));
}

void Tensor::zero_grad() { grad_.assign(data_.size(), 0.0); }

void Tensor::accumulate_grad(std::span<const double> g) {
  if (g.size() != data_.size()) throw Error(ErrorCode::ShapeMismatch, "gradient length");
  if (grad_.empty()) grad_.assign(data_.size(), 0.0);
  for (std::size_t i = 0; i < g.size(); ++i) grad_[i] += g[i];
}

void Tensor::reshape(Shape shape) {
  if (shape_size(shape) != data_.size())
    throw Error(ErrorCode::ShapeMismatch, "cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  shape_ = std::move(shape);
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void debug_check_finite([[maybe_unused]] const Tensor& t, [[maybe_unused]] const char* where) {
#ifdef RAILWAVE_CHECK_FINITE
  if (!t.all_finite()) throw Error(ErrorCode::NonFiniteInput, std::string("non-finite values after ") + where);
#endif
}

}  // namespace railwave
