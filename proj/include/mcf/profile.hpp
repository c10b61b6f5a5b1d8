#pragma once

#include <cstdint>

#include "mcf/network.hpp"

namespace mcf {

struct ModelCost {
  std::uint64_t parameters = 0;
  std::uint64_t macs = 0;  // multiply-accumulates; FLOPs ≈ 2 × macs
};

/// Exact trainable-parameter count plus MACs of one batch-1 eval forward at
/// height × width (see MacTrace for the per-op rules).
template <typename T>
ModelCost count_params_flops(Mcfnet<T>& model, int height, int width);

struct BenchTiming {
  double fps = 0;
  double mean_seconds = 0;
  double stddev_seconds = 0;
  int timed_runs = 0;
};

/// Frames per second from a frame count and elapsed wall time.
double fps_from(std::uint64_t frames, double seconds);

/// `warmup_runs` untimed then `timed_runs` timed eval forwards of a fixed
/// random batch-1 input, on the calling thread.
template <typename T>
BenchTiming fps_benchmark(Mcfnet<T>& model, int height, int width, int warmup_runs, int timed_runs);

}  // namespace mcf
