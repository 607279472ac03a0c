// Copyright 2026 The agemap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "agemap/agenet.hpp"
#include "agemap/phantom.hpp"

namespace agemap {

struct TrainConfig {
  int epochs = 30;
  double lr = 1e-4;
  int accumulation = 32;  // mini-batches per optimizer step
  int batch_size = 1;
  int patience = 3;       // epochs without validation improvement before decay
  double factor = 0.1;    // plateau decay
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  std::uint64_t seed = 11;
  int jobs = 1;

  void validate() const;
};

/// In-memory samples: each input is laid out as the net's input tensor.
struct Dataset {
  std::vector<std::int64_t> ids;
  std::vector<std::vector<float>> inputs;
  std::vector<float> targets;

  std::size_t size() const { return inputs.size(); }
};

Dataset load_dataset(const Manifest& m, int jobs = 1);

double mean_target(const Dataset& d);

class Adam {
 public:
  Adam(const std::vector<NamedParam>& params, double beta1, double beta2, double eps);
  void step(std::vector<NamedParam>& params, const std::vector<std::vector<float>>& grads, double lr);
  long steps() const { return t_; }

 private:
  double beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

/// Multiplies the learning rate by `factor` once the monitored metric has not
/// improved for `patience` consecutive observations.
class PlateauScheduler {
 public:
  PlateauScheduler(double lr, int patience, double factor);
  /// Records one epoch's validation metric; returns the learning rate to use next.
  double observe(double metric);
  double lr() const { return lr_; }
  double best() const { return best_; }
  int epochs_since_improvement() const { return since_; }

 private:
  double lr_;
  int patience_;
  double factor_;
  double best_;
  int since_ = 0;
};

/// Gradient accumulation with Adam updates. Mini-batch gradients are summed
/// into a buffer; every `accumulation` mini-batches (or on flush) the mean is
/// applied in one step.
class Trainer {
 public:
  Trainer(AgeNet& net, const TrainConfig& config);

  /// Forward/backward over one mini-batch; returns its mean absolute error.
  double accumulate(std::span<const std::vector<float>* const> inputs, std::span<const float> targets);

  /// Runs several mini-batches (possibly in parallel) and reduces their
  /// gradients in order; steps whenever the window fills.
  std::vector<double> accumulate_many(const std::vector<std::vector<std::size_t>>& batches, const Dataset& data);

  /// Applies the averaged pending gradient. Returns false when nothing is pending.
  bool flush();

  int pending() const { return pending_; }
  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }
  long steps() const { return adam_.steps(); }
  const std::vector<std::vector<float>>& last_applied_gradient() const { return last_applied_; }

  /// Per-parameter gradient of the mini-batch MAE, in params() order.
  std::vector<std::vector<float>> gradient(std::span<const std::vector<float>* const> inputs,
                                           std::span<const float> targets, double* loss) const;

 private:
  void add_to_buffer(const std::vector<std::vector<float>>& g);

  AgeNet& net_;
  TrainConfig config_;
  Adam adam_;
  double lr_;
  int pending_ = 0;
  std::vector<std::vector<float>> buffer_;
  std::vector<std::vector<float>> last_applied_;
};

struct EpochStats {
  int epoch = 0;
  double train_loss = 0;
  double val_mae = 0;
  double lr = 0;  // rate used during the epoch
};

struct History {
  std::vector<EpochStats> epochs;
};

using EpochCallback = std::function<void(const EpochStats&)>;

History train(AgeNet& net, const Dataset& train_set, const Dataset& val_set, const TrainConfig& config,
              const EpochCallback& on_epoch = {});

std::vector<double> predict_all(const AgeNet& net, const Dataset& data, int jobs = 1);

/// Predictions attached to each record as predicted_age; volumes are read
/// from the manifest. Order of records is preserved.
Manifest predict_manifest(const AgeNet& net, const Manifest& m, int jobs = 1);

}  // namespace agemap
