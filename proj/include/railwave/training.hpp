#pragma once

// Mini-batch training and evaluation for the residual network.

#include <cstdint>
#include <span>
#include <vector>

#include "railwave/metrics.hpp"
#include "railwave/resnet.hpp"
#include "railwave/wavelet.hpp"

namespace railwave {

/// Images stacked as [N x 1 x H x W] with integer labels.
struct ImageSet {
  Tensor images;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  Tensor batch(std::span<const std::size_t> indices) const;
  std::vector<int> batch_labels(std::span<const std::size_t> indices) const;
};

ImageSet make_image_set(const std::vector<FeatureImage>& images);

/// Step decay: base_lr * decay^(number of milestones already passed), milestones as fractions of the run.
struct LrSchedule {
  double base_lr = 0.05;
  double decay = 0.2;
  std::vector<double> milestones = {0.6, 0.8};

  double lr_for_epoch(std::size_t epoch, std::size_t total_epochs) const;
};

struct EpochStats {
  double mean_loss = 0.0;
  std::vector<double> batch_losses;
};

/// One pass over `data` in a shuffled order fixed by `shuffle_seed`. Losses are recorded in encounter order.
EpochStats train_epoch(Model& model, Sgd& optimizer, const ImageSet& data, std::size_t batch_size, double lr,
                       std::uint64_t shuffle_seed);

struct Evaluation {
  double accuracy = 0.0;
  ConfusionMatrix confusion{1};
  std::vector<int> predictions;
};

/// Index of the largest logit per row; ties go to the lower class id.
std::vector<int> argmax_rows(const Tensor& logits);

Evaluation evaluate(const Model& model, const ImageSet& data, std::size_t batch_size = 64);

}  // namespace railwave
