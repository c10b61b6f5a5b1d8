#pragma once

#include <cstdint>
#include <functional>
#include <ostream>
#include <vector>

#include "mcf/augment.hpp"
#include "mcf/network.hpp"
#include "mcf/optimizer.hpp"
#include "mcf/schedule.hpp"

namespace mcf {

struct OhemConfig {
  bool enabled = true;
  double threshold = 0.7;
  double min_kept_fraction = 1.0 / 16.0;
};

struct TrainConfig {
  int batch_size = 4;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  double lr_i = 2.5e-2;
  double power = 0.9;
  double warmup_factor = 0.1;
  int warmup_iters = 0;
  int max_iter = 500;
  OhemConfig ohem;
  AugmentConfig augmentation;
  std::uint64_t seed = 0;

  void validate() const;
  LRSchedule schedule() const;
};

struct IterationRecord {
  int iter = 0;
  double lr = 0;
  double loss = 0;
};

class NonFiniteLossError : public NumericError {
 public:
  NonFiniteLossError(int iter, const std::string& what) : NumericError(what), iter_(iter) {}
  int iteration() const { return iter_; }

 private:
  int iter_;
};

/// One optimisation step per iteration: draw a batch (seeded epoch shuffle),
/// augment, forward in training mode, cross-entropy (OHEM-filtered when
/// enabled), backward, SGD at lr_at(iter). `on_iter` sees every record.
/// On a non-finite loss or gradient the parameters from before that step are
/// restored and NonFiniteLossError is thrown.
template <typename T>
std::vector<IterationRecord> train_loop(Mcfnet<T>& model, const std::vector<SegSample>& dataset,
                                        const TrainConfig& config,
                                        const std::function<void(const IterationRecord&)>& on_iter = {});

/// `iter,lr,loss` header line.
void write_training_csv_header(std::ostream& os);
void write_training_csv_row(std::ostream& os, const IterationRecord& record);

}  // namespace mcf
