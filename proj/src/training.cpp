#include "railwave/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "railwave/error.hpp"

namespace railwave {

Tensor ImageSet::batch(std::span<const std::size_t> indices) const {
  const std::size_t c = images.dim(1), h = images.dim(2), w = images.dim(3);
  const std::size_t stride = c * h * w;
  Tensor out({indices.size(), c, h, w});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    auto src = images.data().subspan(indices[i] * stride, stride);
    std::copy(src.begin(), src.end(), out.data().begin() + static_cast<std::ptrdiff_t>(i * stride));
  }
  return out;
}

std::vector<int> ImageSet::batch_labels(std::span<const std::size_t> indices) const {
  std::vector<int> out;
  out.reserve(indices.size());
  for (auto i : indices) out.push_back(labels[i]);
  return out;
}

ImageSet make_image_set(const std::vector<FeatureImage>& images) {
  if (images.empty()) throw Error(ErrorCode::EmptySplit, "no images");
  const std::size_t h = images[0].height, w = images[0].width;
  ImageSet set{Tensor({images.size(), 1, h, w}), {}};
  set.labels.reserve(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (images[i].height != h || images[i].width != w)
      throw Error(ErrorCode::ShapeMismatch, "image " + std::to_string(i) + " has a different size");
    std::copy(images[i].pixels.begin(), images[i].pixels.end(),
              set.images.data().begin() + static_cast<std::ptrdiff_t>(i * h * w));
    set.labels.push_back(images[i].label.id());
  }
  return set;
}

double LrSchedule::lr_for_epoch(std::size_t epoch, std::size_t total_epochs) const {
  double lr = base_lr;
  for (double m : milestones)
    if (static_cast<double>(epoch) >= std::floor(m * static_cast<double>(total_epochs) + 1e-9)) lr *= decay;
  return lr;
}

EpochStats train_epoch(Model& model, Sgd& optimizer, const ImageSet& data, std::size_t batch_size, double lr,
                       std::uint64_t shuffle_seed) {
  if (data.size() == 0) throw Error(ErrorCode::EmptySplit, "training split is empty");
  if (batch_size == 0) throw Error(ErrorCode::BadConfig, "batch size must be positive");
  model.set_training(true);

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(shuffle_seed);
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<NamedTensor> named = model.parameters();
  std::vector<Tensor*> params;
  for (auto& p : named) params.push_back(p.tensor);

  EpochStats stats;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const auto idx = std::span(order).subspan(start, std::min(batch_size, order.size() - start));
    const Tensor x = data.batch(idx);
    const auto labels = data.batch_labels(idx);
    model.zero_grad();
    const auto ce = softmax_cross_entropy(model.forward(x), labels);
    if (!std::isfinite(ce.loss))
      throw Error(ErrorCode::Diverged, "loss became non-finite at batch " + std::to_string(stats.batch_losses.size()));
    model.backward(softmax_cross_entropy_backward(ce, labels));
    optimizer.step(params, lr);
    stats.batch_losses.push_back(ce.loss);
  }
  stats.mean_loss = std::accumulate(stats.batch_losses.begin(), stats.batch_losses.end(), 0.0) /
                    static_cast<double>(stats.batch_losses.size());
  return stats;
}

std::vector<int> argmax_rows(const Tensor& logits) {
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  std::vector<int> out(n, 0);
  for (std::size_t r = 0; r < n; ++r) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < k; ++j)
      if (logits[r * k + j] > logits[r * k + best]) best = j;
    out[r] = static_cast<int>(best);
  }
  return out;
}

Evaluation evaluate(const Model& model, const ImageSet& data, std::size_t batch_size) {
  if (data.size() == 0) throw Error(ErrorCode::EmptySplit, "evaluation split is empty");
  Evaluation ev;
  ev.predictions.reserve(data.size());
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    idx.resize(std::min(batch_size, data.size() - start));
    std::iota(idx.begin(), idx.end(), start);
    const auto preds = argmax_rows(model.infer(data.batch(idx)));
    ev.predictions.insert(ev.predictions.end(), preds.begin(), preds.end());
  }
  ev.confusion = railwave::accumulate(ev.predictions, data.labels, model.spec().num_classes);
  ev.accuracy = accuracy(ev.confusion);
  return ev;
}

}  // namespace railwave
