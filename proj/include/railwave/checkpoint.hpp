#pragma once

// RWCK checkpoint files: model spec, named tensors, optimizer state and run counters.
//
// Layout: "RWCK", version u32, spec text (u32 length + UTF-8), blob count u32, then per blob
// name (u32 length + UTF-8), dtype u8 (0=f32, 1=f64, 2=u64), rank u8, dims u32 each, raw LE data,
// CRC32 of the data; a CRC32 of everything before it closes the file.

#include <cstdint>
#include <string>
#include <vector>

#include "railwave/nn.hpp"
#include "railwave/resnet.hpp"

namespace railwave {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct TrainingState {
  std::vector<Tensor> velocity;  // one per trainable parameter, empty when no optimizer state
  std::uint64_t epoch = 0;
  std::uint64_t rng_state = 0;
};

struct LoadedCheckpoint {
  Model model;
  TrainingState state;
};

std::vector<std::uint8_t> encode_checkpoint(Model& model, const TrainingState& state);
void save_checkpoint(const std::string& path, Model& model, const TrainingState& state);

/// Rebuilds the model from the stored spec and restores every tensor bit-exactly.
LoadedCheckpoint load_checkpoint(const std::string& path);

/// Loads tensors into an existing model; names and shapes must match one to one.
TrainingState restore_checkpoint(Model& model, const std::string& path);

}  // namespace railwave
