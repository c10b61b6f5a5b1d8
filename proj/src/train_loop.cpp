#include "mcf/train_loop.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "mcf/loss.hpp"

namespace mcf {

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (momentum < 0 || weight_decay < 0) throw ConfigError("train.momentum/weight_decay must be >= 0");
  if (!(ohem.threshold > 0 && ohem.threshold <= 1)) throw ConfigError("train.ohem.threshold must lie in (0, 1]");
  if (!(ohem.min_kept_fraction > 0 && ohem.min_kept_fraction <= 1)) {
    throw ConfigError("train.ohem.min_kept_fraction must lie in (0, 1]");
  }
  if (augmentation.crop_h < 1 || augmentation.crop_w < 1) throw ConfigError("train.aug crop must be >= 1");
  schedule();
}

LRSchedule TrainConfig::schedule() const {
  return LRSchedule::poly_with_warmup(lr_i, power, max_iter, warmup_iters, warmup_factor);
}

template <typename T>
std::vector<IterationRecord> train_loop(Mcfnet<T>& model, const std::vector<SegSample>& dataset,
                                        const TrainConfig& config,
                                        const std::function<void(const IterationRecord&)>& on_iter) {
  config.validate();
  if (dataset.empty()) throw ConfigError("train_loop: dataset is empty");
  const LRSchedule schedule = config.schedule();
  Rng rng(config.seed);
  Sgd<T> optimizer(SgdOptions{config.momentum, config.weight_decay});
  ParameterSet<T> params = model.parameters();

  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();

  std::vector<IterationRecord> log;
  log.reserve(static_cast<std::size_t>(config.max_iter));
  for (int iter = 0; iter < config.max_iter; ++iter) {
    std::vector<SegSample> samples;
    samples.reserve(static_cast<std::size_t>(config.batch_size));
    for (int b = 0; b < config.batch_size; ++b) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      samples.push_back(augment(dataset[order[cursor++]], config.augmentation, rng));
    }
    const SegBatch batch = make_batch(samples);
    Tensor<T> images;
    if constexpr (std::is_same_v<T, float>) {
      images = batch.images;
    } else {
      images = Tensor<T>(batch.images.shape(),
                         std::vector<T>(batch.images.data().begin(), batch.images.data().end()));
    }

    // Snapshot for rollback; BN running stats move during the forward pass.
    std::vector<std::vector<T>> snapshot;
    for (const auto& p : params.parameters()) snapshot.emplace_back(p.value.data().begin(), p.value.data().end());
    for (const auto& b : params.buffers()) snapshot.push_back(*b.values);
    auto restore = [&] {
      std::size_t k = 0;
      for (auto& p : params.parameters()) {
        std::copy(snapshot[k].begin(), snapshot[k].end(), p.value.mutable_data().begin());
        ++k;
      }
      for (const auto& b : params.buffers()) *b.values = snapshot[k++];
    };

    params.zero_grad();
    Tensor<T> loss;
    try {
      const Tensor<T> logits = model.forward(images, true);
      if (config.ohem.enabled) {
        const PixelStats<T> stats = pixel_cross_entropy(logits, batch.labels);
        const std::size_t valid = static_cast<std::size_t>(
            std::count(stats.valid.begin(), stats.valid.end(), std::uint8_t{1}));
        const std::size_t min_kept = std::max<std::size_t>(
            1, static_cast<std::size_t>(config.ohem.min_kept_fraction * static_cast<double>(valid)));
        const auto keep = ohem_filter(stats, config.ohem.threshold, min_kept);
        loss = masked_cross_entropy(logits, batch.labels, keep);
      } else {
        loss = softmax_cross_entropy(logits, batch.labels);
      }
      backward(loss);
      const double lr = lr_at(iter, schedule);
      optimizer.step(params, lr);
      const IterationRecord record{iter, lr, static_cast<double>(loss.item())};
      log.push_back(record);
      if (on_iter) on_iter(record);
    } catch (const NumericError& e) {
      restore();
      throw NonFiniteLossError(iter, "training diverged at iteration " + std::to_string(iter) +
                                         ": " + e.what());
    }
  }
  return log;
}

void write_training_csv_header(std::ostream& os) { os << "iter,lr,loss\n"; }

void write_training_csv_row(std::ostream& os, const IterationRecord& r) {
  char buf[96];
  std::snprintf(buf, sizeof(buf), "%d,%.10g,%.9g\n", r.iter, r.lr, r.loss);
  os << buf;
}

template std::vector<IterationRecord> train_loop(Mcfnet<float>&, const std::vector<SegSample>&,
                                                 const TrainConfig&,
                                                 const std::function<void(const IterationRecord&)>&);
template std::vector<IterationRecord> train_loop(Mcfnet<double>&, const std::vector<SegSample>&,
                                                 const TrainConfig&,
                                                 const std::function<void(const IterationRecord&)>&);

}  // namespace mcf
