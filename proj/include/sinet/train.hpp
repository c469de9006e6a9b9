#pragma once

// Adam, the plateau learning-rate schedule and a generic epoch loop with
// seeded shuffling, per-epoch validation, checkpoints and a TSV metric log.

#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "sinet/config.hpp"
#include "sinet/dataio.hpp"
#include "sinet/layers.hpp"

namespace sinet {

template <typename T>
struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t step = 0;
  std::vector<Tensor<T>> m;
  std::vector<Tensor<T>> v;

  // Zero moments shaped like params.
  void reset(const TensorList<T>& params);
  // Moments named "<param>.m" / "<param>.v" for checkpoints.
  TensorList<T> named(const TensorList<T>& params);
};

// One bias-corrected Adam update. NumericError (and no update at all) when
// any gradient is non-finite. clip_norm > 0 rescales the gradients to at
// most that global L2 norm first.
template <typename T>
void adam_step(AdamState<T>& state, const TensorList<T>& params, std::span<const Tensor<T>> grads,
               double clip_norm = 0.0);

struct PlateauSchedule {
  double lr = 1e-3;
  std::size_t patience = 5;
  double factor = 0.1;
  double threshold = 1e-4;
  double best = std::numeric_limits<double>::infinity();
  std::size_t bad_epochs = 0;
  std::size_t drops = 0;

  // Records one validation loss; after `patience` consecutive epochs without
  // an improvement larger than `threshold`, multiplies lr by `factor` and
  // restarts the count. Returns the (possibly reduced) lr.
  double update(double val_loss);
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0;
  double val_loss = 0;
  double metric = 0;
  double lr = 0;
};

std::string format_metric_log(const std::vector<EpochRecord>& log);
std::vector<EpochRecord> read_metric_log(const std::string& path);

struct TrainOptions {
  std::size_t epochs = 30;
  std::size_t batch = 64;
  double lr = 1e-3;
  std::uint64_t seed = 1;
  double clip_norm = 0.0;
  std::size_t patience = 5;
  // Smallest batch worth a step; a shorter trailing batch is dropped.
  std::size_t min_batch = 1;
  std::string out_dir;     // checkpoints and metrics.tsv; nothing is written when empty
  std::string resume_dir;  // continue from this checkpoint
  std::string metric_name = "metric";
  bool verbose = false;
};

// What the loop needs from a model.
template <typename T>
struct TrainHooks {
  std::function<Var<T>(Graph<T>&, std::span<const VideoSample<T>* const>, const Pass&)> loss;
  // Validation loss and task metric.
  std::function<std::pair<double, double>()> evaluate;
  TensorList<T> params;
  TensorList<T> buffers;
  ConfigMap model_config;
  // Called with each checkpoint directory after it is written.
  std::function<void(const std::string&)> on_checkpoint;
};

struct TrainResult {
  std::vector<EpochRecord> log;
  std::size_t best_epoch = 0;
  double best_val_loss = std::numeric_limits<double>::infinity();
};

// Batch order for an epoch: a permutation of [0, n) that depends only on
// (seed, epoch).
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch);
// Dropout stream for one batch.
Rng batch_rng(std::uint64_t seed, std::size_t epoch, std::size_t batch);

// Forward, backward and one Adam update on a batch. Returns the loss.
template <typename T>
double train_step(TrainHooks<T>& hooks, AdamState<T>& adam, std::span<const VideoSample<T>* const> batch,
                  Rng& rng, double clip_norm = 0.0);

// Epoch loop. Writes <out>/metrics.tsv, <out>/last and <out>/best when
// out_dir is set. EmptyInputError on an empty training set; NumericError on
// a non-finite loss, leaving the last checkpoint from a finite epoch.
template <typename T>
TrainResult train_loop(TrainHooks<T>& hooks, const Dataset<T>& train, const TrainOptions& options);

}  // namespace sinet
