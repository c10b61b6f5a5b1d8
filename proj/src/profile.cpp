#include "mcf/profile.hpp"

#include <chrono>
#include <cmath>
#include <random>

namespace mcf {

template <typename T>
ModelCost count_params_flops(Mcfnet<T>& model, int height, int width) {
  ModelCost cost;
  cost.parameters = model.parameters().parameter_count();
  NoGradGuard no_grad;
  MacTrace trace;
  model.forward(Tensor<T>::zeros(Shape{1, model.config().input_channels, height, width}), false);
  cost.macs = trace.total();
  return cost;
}

double fps_from(std::uint64_t frames, double seconds) {
  if (!(seconds > 0)) throw NumericError("fps: elapsed time must be positive");
  return static_cast<double>(frames) / seconds;
}

template <typename T>
BenchTiming fps_benchmark(Mcfnet<T>& model, int height, int width, int warmup_runs, int timed_runs) {
  if (timed_runs < 1) throw ConfigError("fps_benchmark: timed_runs must be >= 1");
  if (warmup_runs < 0) throw ConfigError("fps_benchmark: warmup_runs must be >= 0");
  Rng rng(12345);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const Shape shape{1, model.config().input_channels, height, width};
  std::vector<T> data(shape_numel(shape));
  for (auto& v : data) v = static_cast<T>(unit(rng));
  const Tensor<T> input(shape, std::move(data));

  NoGradGuard no_grad;
  for (int i = 0; i < warmup_runs; ++i) model.forward(input, false);
  std::vector<double> seconds;
  seconds.reserve(static_cast<std::size_t>(timed_runs));
  for (int i = 0; i < timed_runs; ++i) {
    const auto start = std::chrono::steady_clock::now();
    model.forward(input, false);
    const auto stop = std::chrono::steady_clock::now();
    seconds.push_back(std::chrono::duration<double>(stop - start).count());
  }
  double total = 0;
  for (double s : seconds) total += s;
  const double mean = total / timed_runs;
  double var = 0;
  for (double s : seconds) var += (s - mean) * (s - mean);
  BenchTiming t;
  t.timed_runs = timed_runs;
  t.mean_seconds = mean;
  t.stddev_seconds = timed_runs > 1 ? std::sqrt(var / (timed_runs - 1)) : 0.0;
  t.fps = fps_from(static_cast<std::uint64_t>(timed_runs), total);
  return t;
}

template ModelCost count_params_flops(Mcfnet<float>&, int, int);
template ModelCost count_params_flops(Mcfnet<double>&, int, int);
template BenchTiming fps_benchmark(Mcfnet<float>&, int, int, int, int);
template BenchTiming fps_benchmark(Mcfnet<double>&, int, int, int, int);

}  // namespace mcf
