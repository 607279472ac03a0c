// Copyright 2026 The agemap Authors
// SPDX-License-Identifier: Apache-2.0

#include "agemap/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "agemap/error.hpp"
#include "agemap/parallel.hpp"

namespace agemap {

void TrainConfig::validate() const {
  require(epochs >= 1, "train.epochs must be >= 1");
  require(lr > 0.0 && std::isfinite(lr), "train.lr must be positive");
  require(accumulation >= 1, "train.accumulation must be >= 1");
  require(batch_size >= 1, "train.batch_size must be >= 1");
  require(patience >= 1, "train.patience must be >= 1");
  require(factor > 0.0 && factor <= 1.0, "train.factor must lie in (0, 1]");
  require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0, "Adam betas must lie in [0, 1)");
  require(eps > 0.0, "Adam eps must be positive");
}

Dataset load_dataset(const Manifest& m, int jobs) {
  Dataset d;
  d.ids.resize(m.records.size());
  d.inputs.resize(m.records.size());
  d.targets.resize(m.records.size());
  parallel_for(m.records.size(), jobs, [&](std::size_t i) {
    const SubjectRecord& r = m.records[i];
    const Volume3 v = read_vol(m.resolve(r.image_path));
    d.ids[i] = r.id;
    d.inputs[i].assign(v.data().begin(), v.data().end());
    d.targets[i] = static_cast<float>(r.age);
  });
  return d;
}

double mean_target(const Dataset& d) {
  require(d.size() > 0, "mean_target of an empty dataset");
  double s = 0.0;
  for (float t : d.targets) s += t;
  return s / double(d.size());
}

Adam::Adam(const std::vector<NamedParam>& params, double beta1, double beta2, double eps)
    : beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& p : params) {
    m_.emplace_back(p.value.size(), 0.0);
    v_.emplace_back(p.value.size(), 0.0);
  }
}

void Adam::step(std::vector<NamedParam>& params, const std::vector<std::vector<float>>& grads, double lr) {
  require(grads.size() == params.size(), "Adam: gradient count mismatch");
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, double(t_));
  const double c2 = 1.0 - std::pow(beta2_, double(t_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& w = params[k].value;
    const auto& g = grads[k];
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * double(g[i]) * g[i];
      const double mh = m[i] / c1, vh = v[i] / c2;
      w[i] = static_cast<float>(w[i] - lr * mh / (std::sqrt(vh) + eps_));
    }
  }
}

PlateauScheduler::PlateauScheduler(double lr, int patience, double factor)
    : lr_(lr), patience_(patience), factor_(factor), best_(std::numeric_limits<double>::infinity()) {}

double PlateauScheduler::observe(double metric) {
  if (metric < best_) {
    best_ = metric;
    since_ = 0;
  } else if (++since_ >= patience_) {
    lr_ *= factor_;
    since_ = 0;
  }
  return lr_;
}

Trainer::Trainer(AgeNet& net, const TrainConfig& config)
    : net_(net), config_(config), adam_(net.params(), config.beta1, config.beta2, config.eps), lr_(config.lr) {
  config_.validate();
  for (const auto& p : net_.params()) buffer_.emplace_back(p.value.size(), 0.0f);
}

std::vector<std::vector<float>> Trainer::gradient(std::span<const std::vector<float>* const> inputs,
                                                  std::span<const float> targets, double* loss) const {
  ad::Tape tape;
  const auto bound = net_.bind(tape);
  std::vector<ad::Tensor> preds;
  preds.reserve(inputs.size());
  for (const auto* in : inputs) preds.push_back(net_.forward(tape, bound, *in).prediction);
  const ad::Tensor l = ad::mae_loss(ad::concat(preds), targets);
  if (loss) *loss = l.item();
  const ad::Gradients g = tape.backward(l);
  std::vector<std::vector<float>> out;
  out.reserve(bound.size());
  for (const auto& b : bound) {
    const auto s = g.of(b);
    out.emplace_back(s.begin(), s.end());
  }
  return out;
}

void Trainer::add_to_buffer(const std::vector<std::vector<float>>& g) {
  for (std::size_t k = 0; k < buffer_.size(); ++k)
    for (std::size_t i = 0; i < buffer_[k].size(); ++i) buffer_[k][i] += g[k][i];
  ++pending_;
}

double Trainer::accumulate(std::span<const std::vector<float>* const> inputs, std::span<const float> targets) {
  double loss = 0.0;
  add_to_buffer(gradient(inputs, targets, &loss));
  if (pending_ >= config_.accumulation) flush();
  return loss;
}

std::vector<double> Trainer::accumulate_many(const std::vector<std::vector<std::size_t>>& batches,
                                             const Dataset& data) {
  std::vector<double> losses;
  std::size_t next = 0;
  while (next < batches.size()) {
    const std::size_t room = static_cast<std::size_t>(config_.accumulation - pending_);
    const std::size_t count = std::min(room, batches.size() - next);
    std::vector<std::vector<std::vector<float>>> grads(count);
    std::vector<double> window_loss(count);
    parallel_for(count, config_.jobs, [&](std::size_t j) {
      const auto& batch = batches[next + j];
      std::vector<const std::vector<float>*> in;
      std::vector<float> tgt;
      for (std::size_t idx : batch) {
        in.push_back(&data.inputs[idx]);
        tgt.push_back(data.targets[idx]);
      }
      grads[j] = gradient(in, tgt, &window_loss[j]);
    });
    for (std::size_t j = 0; j < count; ++j) {
      add_to_buffer(grads[j]);
      losses.push_back(window_loss[j]);
    }
    if (pending_ >= config_.accumulation) flush();
    next += count;
  }
  return losses;
}

bool Trainer::flush() {
  if (pending_ == 0) return false;
  const float inv = 1.0f / static_cast<float>(pending_);
  for (auto& g : buffer_)
    for (float& x : g) x *= inv;
  adam_.step(net_.params(), buffer_, lr_);
  last_applied_ = buffer_;
  for (auto& g : buffer_) std::fill(g.begin(), g.end(), 0.0f);
  pending_ = 0;
  return true;
}

std::vector<double> predict_all(const AgeNet& net, const Dataset& data, int jobs) {
  std::vector<double> out(data.size());
  parallel_for(data.size(), jobs, [&](std::size_t i) { out[i] = net.predict(data.inputs[i]); });
  return out;
}

History train(AgeNet& net, const Dataset& train_set, const Dataset& val_set, const TrainConfig& config,
              const EpochCallback& on_epoch) {
  config.validate();
  if (train_set.size() == 0 || val_set.size() == 0)
    fail(Errc::invalid_argument, "training needs non-empty train and val splits");
  Trainer trainer(net, config);
  PlateauScheduler scheduler(config.lr, config.patience, config.factor);
  History history;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::seed_seq seq{static_cast<std::uint32_t>(config.seed), static_cast<std::uint32_t>(config.seed >> 32),
                      static_cast<std::uint32_t>(epoch)};
    std::mt19937_64 rng(seq);
    std::shuffle(order.begin(), order.end(), rng);

    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t s = 0; s < order.size(); s += static_cast<std::size_t>(config.batch_size))
      batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(s),
                           order.begin() + static_cast<std::ptrdiff_t>(
                                               std::min(order.size(), s + static_cast<std::size_t>(config.batch_size))));

    EpochStats stats;
    stats.epoch = epoch;
    stats.lr = trainer.lr();
    try {
      const std::vector<double> losses = trainer.accumulate_many(batches, train_set);
      trainer.flush();
      stats.train_loss = std::accumulate(losses.begin(), losses.end(), 0.0) / double(losses.size());
      const std::vector<double> preds = predict_all(net, val_set, config.jobs);
      double err = 0.0;
      for (std::size_t i = 0; i < preds.size(); ++i) err += std::abs(preds[i] - val_set.targets[i]);
      stats.val_mae = err / double(preds.size());
    } catch (const Error& e) {
      if (e.code() != Errc::numerical) throw;
      fail(Errc::numerical, "training diverged in epoch " + std::to_string(epoch) + " after " +
                                std::to_string(trainer.steps()) + " optimizer steps (lr " +
                                std::to_string(trainer.lr()) + "): " + e.what());
    }
    if (!std::isfinite(stats.train_loss) || !std::isfinite(stats.val_mae))
      fail(Errc::numerical, "non-finite loss in epoch " + std::to_string(epoch));
    trainer.set_lr(scheduler.observe(stats.val_mae));
    history.epochs.push_back(stats);
    if (on_epoch) on_epoch(stats);
  }
  return history;
}

Manifest predict_manifest(const AgeNet& net, const Manifest& m, int jobs) {
  Manifest out = m;
  parallel_for(out.records.size(), jobs, [&](std::size_t i) {
    SubjectRecord& r = out.records[i];
    const auto path = m.resolve(r.image_path);
    if (!std::filesystem::exists(path))
      fail(Errc::missing_dependency, "volume for subject " + std::to_string(r.id) + " missing: " + path.string());
    r.predicted_age = net.predict(read_vol(path));
  });
  return out;
}

}  // namespace agemap
