#pragma once

#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "impsy/dataset.hpp"
#include "impsy/mdrnn.hpp"

namespace impsy {

struct TrainHyper {
  int seq_len = 50;
  int batch_size = 64;
  double learning_rate = 1e-3;
  int epochs = 10;
  double clip_norm = 1.0;
  double validation_split = 0.1;

  void check() const;
};

struct EpochLoss {
  int epoch = 0;
  double train = 0.0;
  double validation = 0.0;  // NaN when no validation windows exist
};

struct TrainResult {
  MdrnnParams params;
  // Entry 0 evaluates the starting parameters before any update.
  std::vector<EpochLoss> history;
  int best_epoch = 0;
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using EpochCallback = std::function<void(const EpochLoss&)>;

/// Truncated BPTT over seq_len windows with Adam and global-norm clipping.
/// Returns the parameters with the best validation loss (train loss when no
/// validation windows exist).
TrainResult train(const Dataset& dataset, const MdrnnShape& shape, const TrainHyper& hyper,
                  const std::optional<MdrnnParams>& init, Rng& rng,
                  const EpochCallback& on_epoch = {});

/// Summed next-step NLL over a window of encoded frames (inputs[t] predicts
/// inputs[t+1]) starting from a zero state. When grad is non-null, it must be
/// shaped like params and receives the added gradient.
double window_loss(const MdrnnParams& params, std::span<const std::vector<double>> window,
                   MdrnnParams* grad);

/// Mean next-step NLL over every transition in the dataset, windowed like training.
double dataset_loss(const MdrnnParams& params, const Dataset& dataset, int seq_len);

/// Splits each sequence into encoded windows of up to seq_len + 1 frames with
/// stride seq_len so every transition appears exactly once.
std::vector<std::vector<std::vector<double>>> make_windows(const Dataset& dataset, int seq_len);

}  // namespace impsy
