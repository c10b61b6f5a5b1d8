#pragma once

namespace mcf {

/// Poly decay with an exponential warmup ramp.
///   iter <  warmup_iters: lr_max · warmup_factor^(1 − iter / warmup_iters)
///   iter >= warmup_iters: lr_i · (1 − iter / max_iter)^power
/// lr_max is the poly value at warmup_iters, so the rate is continuous there.
struct LRSchedule {
  double lr_i = 2.5e-2;
  double power = 0.9;
  int max_iter = 1;
  int warmup_iters = 0;
  double warmup_factor = 0.1;
  double lr_max = 2.5e-2;

  static LRSchedule poly_with_warmup(double lr_i, double power, int max_iter, int warmup_iters,
                                     double warmup_factor);

  void validate() const;
};

/// Rate for iteration `iter`. Iterations past max_iter get 0; negative
/// iterations are rejected.
double lr_at(int iter, const LRSchedule& schedule);

}  // namespace mcf
