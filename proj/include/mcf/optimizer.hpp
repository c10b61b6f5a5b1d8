#pragma once

#include <vector>

#include "mcf/layers.hpp"

namespace mcf {

struct SgdOptions {
  double momentum = 0.9;
  double weight_decay = 1e-4;
};

/// SGD with heavy-ball momentum:
///   v ← momentum·v + grad + weight_decay·param
///   param ← param − lr·v
/// Weight decay is applied only to parameters flagged for it (conv weights and
/// BN gamma). Parameters without a gradient are treated as having zero grad.
template <typename T>
class Sgd {
 public:
  explicit Sgd(SgdOptions options = {}) : options_(options) {}

  /// Throws NumericError, leaving every parameter untouched, if any gradient
  /// holds a non-finite value.
  void step(ParameterSet<T>& params, double lr);

  const SgdOptions& options() const { return options_; }

 private:
  SgdOptions options_;
  std::vector<std::vector<T>> velocity_;
};

}  // namespace mcf
