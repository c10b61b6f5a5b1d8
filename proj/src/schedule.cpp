#include "mcf/schedule.hpp"

#include <cmath>
#include <string>

#include "mcf/tensor.hpp"

namespace mcf {

namespace {

double poly(double lr_i, double power, int iter, int max_iter) {
  return lr_i * std::pow(1.0 - static_cast<double>(iter) / max_iter, power);
}

}  // namespace

LRSchedule LRSchedule::poly_with_warmup(double lr_i, double power, int max_iter, int warmup_iters,
                                        double warmup_factor) {
  LRSchedule s;
  s.lr_i = lr_i;
  s.power = power;
  s.max_iter = max_iter;
  s.warmup_iters = warmup_iters;
  s.warmup_factor = warmup_factor;
  s.lr_max = max_iter > 0 ? poly(lr_i, power, warmup_iters, max_iter) : lr_i;
  s.validate();
  return s;
}

void LRSchedule::validate() const {
  if (!(lr_i > 0)) throw ConfigError("schedule: lr_i must be positive");
  if (max_iter < 1) throw ConfigError("schedule: max_iter must be >= 1");
  if (warmup_iters < 0 || warmup_iters >= max_iter) {
    throw ConfigError("schedule: warmup_iters must lie in [0, max_iter)");
  }
  if (!(warmup_factor > 0 && warmup_factor <= 1)) {
    throw ConfigError("schedule: warmup_factor must lie in (0, 1]");
  }
  const double expected = poly(lr_i, power, warmup_iters, max_iter);
  if (std::abs(lr_max - expected) > 1e-12 * std::max(1.0, std::abs(expected))) {
    throw ConfigError("schedule: lr_max must equal the poly rate at warmup_iters");
  }
}

double lr_at(int iter, const LRSchedule& s) {
  if (iter < 0) throw ConfigError("lr_at: negative iteration " + std::to_string(iter));
  if (iter > s.max_iter) return 0.0;
  if (iter < s.warmup_iters) {
    return s.lr_max * std::pow(s.warmup_factor, 1.0 - static_cast<double>(iter) / s.warmup_iters);
  }
  return poly(s.lr_i, s.power, iter, s.max_iter);
}

}  // namespace mcf
