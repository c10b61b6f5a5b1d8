#include "mcf/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

namespace mcf {

namespace {

thread_local MacTrace* current_trace = nullptr;

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void require_rank4(const Shape& s, const char* op) {
  if (s.size() != 4) {
    throw ShapeError(std::string(op) + " expects an N×C×H×W tensor, got " + shape_to_string(s));
  }
}

inline std::size_t sz(int v) { return static_cast<std::size_t>(v); }

template <typename T>
void im2col(const T* x, int channels, int h, int w, int k, int stride, int pad, int out_h, int out_w,
            T* cols) {
  const std::size_t plane = sz(out_h) * sz(out_w);
  for (int c = 0; c < channels; ++c) {
    for (int kh = 0; kh < k; ++kh) {
      for (int kw = 0; kw < k; ++kw) {
        T* row = cols + ((sz(c) * k + kh) * k + kw) * plane;
        for (int oh = 0; oh < out_h; ++oh) {
          const int ih = oh * stride - pad + kh;
          T* dst = row + sz(oh) * out_w;
          if (ih < 0 || ih >= h) {
            std::fill(dst, dst + out_w, T(0));
            continue;
          }
          const T* src = x + (sz(c) * h + ih) * w;
          for (int ow = 0; ow < out_w; ++ow) {
            const int iw = ow * stride - pad + kw;
            dst[ow] = (iw >= 0 && iw < w) ? src[iw] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* cols, int channels, int h, int w, int k, int stride, int pad, int out_h,
                int out_w, T* dx) {
  const std::size_t plane = sz(out_h) * sz(out_w);
  for (int c = 0; c < channels; ++c) {
    for (int kh = 0; kh < k; ++kh) {
      for (int kw = 0; kw < k; ++kw) {
        const T* row = cols + ((sz(c) * k + kh) * k + kw) * plane;
        for (int oh = 0; oh < out_h; ++oh) {
          const int ih = oh * stride - pad + kh;
          if (ih < 0 || ih >= h) continue;
          T* dst = dx + (sz(c) * h + ih) * w;
          const T* src = row + sz(oh) * out_w;
          for (int ow = 0; ow < out_w; ++ow) {
            const int iw = ow * stride - pad + kw;
            if (iw >= 0 && iw < w) dst[iw] += src[ow];
          }
        }
      }
    }
  }
}

enum class Broadcast { kNone, kSecondIsGate, kFirstIsGate };

Broadcast broadcast_mode(const Shape& a, const Shape& b, const char* op) {
  if (a == b) return Broadcast::kNone;
  auto is_gate_pair = [](const Shape& full, const Shape& gate) {
    return full.size() == 4 && gate.size() == 4 && full[0] == gate[0] && full[1] == gate[1] &&
           gate[2] == 1 && gate[3] == 1;
  };
  if (is_gate_pair(a, b)) return Broadcast::kSecondIsGate;
  if (is_gate_pair(b, a)) return Broadcast::kFirstIsGate;
  throw ShapeError(std::string(op) + ": unsupported broadcast " + shape_to_string(a) + " vs " +
                   shape_to_string(b));
}

struct ResizeTap {
  int i0, i1;
  double frac;
};

std::vector<ResizeTap> resize_taps(int in, int out) {
  std::vector<ResizeTap> taps(sz(out));
  const double scale = static_cast<double>(in) / out;
  for (int o = 0; o < out; ++o) {
    double src = (o + 0.5) * scale - 0.5;
    if (src < 0) src = 0;
    int i0 = static_cast<int>(std::floor(src));
    if (i0 > in - 1) i0 = in - 1;
    const int i1 = std::min(i0 + 1, in - 1);
    taps[sz(o)] = {i0, i1, src - i0};
  }
  return taps;
}

}  // namespace

MacTrace::MacTrace() : previous_(current_trace) { current_trace = this; }

MacTrace::~MacTrace() {
  current_trace = previous_;
  if (previous_ != nullptr) previous_->total_ += total_;
}

void MacTrace::record(std::uint64_t macs) {
  if (current_trace != nullptr) current_trace->total_ += macs;
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight,
                 const std::optional<std::type_identity_t<Tensor<T>>>& bias, int stride,
                 int padding) {
  require_rank4(input.shape(), "conv2d");
  require_rank4(weight.shape(), "conv2d weight");
  const int n = input.dim(0), c_in = input.dim(1), h = input.dim(2), w = input.dim(3);
  const int c_out = weight.dim(0), k = weight.dim(2);
  if (weight.dim(1) != c_in) {
    throw ShapeError("conv2d: input has " + std::to_string(c_in) + " channels, weight expects " +
                     std::to_string(weight.dim(1)));
  }
  if (weight.dim(3) != k) throw ShapeError("conv2d: only square kernels are supported");
  if (stride < 1 || padding < 0) throw ShapeError("conv2d: stride must be >= 1 and padding >= 0");
  if (h + 2 * padding < k || w + 2 * padding < k) {
    throw ShapeError("conv2d: kernel larger than padded input " + shape_to_string(input.shape()));
  }
  if (bias && (bias->rank() != 1 || bias->dim(0) != c_out)) {
    throw ShapeError("conv2d: bias must have shape [" + std::to_string(c_out) + "]");
  }
  const int out_h = (h + 2 * padding - k) / stride + 1;
  const int out_w = (w + 2 * padding - k) / stride + 1;
  const std::size_t patch = sz(c_in) * k * k;
  const std::size_t plane = sz(out_h) * out_w;
  const bool direct = (k == 1 && stride == 1 && padding == 0);

  std::vector<T> out(sz(n) * c_out * plane);
  std::vector<T> cols(direct ? 0 : patch * plane);
  Eigen::Map<const RowMat<T>> wmat(weight.data().data(), c_out, static_cast<Eigen::Index>(patch));
  for (int b = 0; b < n; ++b) {
    const T* x = input.data().data() + sz(b) * c_in * h * w;
    const T* col_ptr = x;
    if (!direct) {
      im2col(x, c_in, h, w, k, stride, padding, out_h, out_w, cols.data());
      col_ptr = cols.data();
    }
    Eigen::Map<const RowMat<T>> cmat(col_ptr, static_cast<Eigen::Index>(patch),
                                     static_cast<Eigen::Index>(plane));
    Eigen::Map<RowMat<T>> ymat(out.data() + sz(b) * c_out * plane, c_out,
                               static_cast<Eigen::Index>(plane));
    ymat.noalias() = wmat * cmat;
    if (bias) {
      for (int co = 0; co < c_out; ++co) ymat.row(co).array() += bias->data()[sz(co)];
    }
  }
  MacTrace::record(static_cast<std::uint64_t>(n) * c_out * plane * patch);

  std::vector<Tensor<T>> inputs{input, weight};
  if (bias) inputs.push_back(*bias);
  auto backward_fn = [=](Node<T>& self) {
    Node<T>& in = *self.inputs[0];
    Node<T>& wt = *self.inputs[1];
    Node<T>* bs = self.inputs.size() > 2 ? self.inputs[2].get() : nullptr;
    Eigen::Map<const RowMat<T>> wm(wt.value.data(), c_out, static_cast<Eigen::Index>(patch));
    std::vector<T> col_buf(direct ? 0 : patch * plane);
    std::vector<T> dcol(in.requires_grad ? patch * plane : 0);
    for (int b = 0; b < n; ++b) {
      Eigen::Map<const RowMat<T>> dy(self.grad.data() + sz(b) * c_out * plane, c_out,
                                     static_cast<Eigen::Index>(plane));
      if (wt.requires_grad) {
        const T* x = in.value.data() + sz(b) * c_in * h * w;
        const T* col_ptr = x;
        if (!direct) {
          im2col(x, c_in, h, w, k, stride, padding, out_h, out_w, col_buf.data());
          col_ptr = col_buf.data();
        }
        Eigen::Map<const RowMat<T>> cm(col_ptr, static_cast<Eigen::Index>(patch),
                                       static_cast<Eigen::Index>(plane));
        Eigen::Map<RowMat<T>> dw(wt.ensure_grad().data(), c_out, static_cast<Eigen::Index>(patch));
        dw.noalias() += dy * cm.transpose();
      }
      if (bs != nullptr && bs->requires_grad) {
        auto& db = bs->ensure_grad();
        for (int co = 0; co < c_out; ++co) db[sz(co)] += dy.row(co).sum();
      }
      if (in.requires_grad) {
        T* dx = in.ensure_grad().data() + sz(b) * c_in * h * w;
        if (direct) {
          Eigen::Map<RowMat<T>> dxm(dx, static_cast<Eigen::Index>(patch),
                                    static_cast<Eigen::Index>(plane));
          dxm.noalias() += wm.transpose() * dy;
        } else {
          Eigen::Map<RowMat<T>> dcm(dcol.data(), static_cast<Eigen::Index>(patch),
                                    static_cast<Eigen::Index>(plane));
          dcm.noalias() = wm.transpose() * dy;
          col2im_add(dcol.data(), c_in, h, w, k, stride, padding, out_h, out_w, dx);
        }
      }
    }
  };
  return make_result<T>("conv2d", Shape{n, c_out, out_h, out_w}, std::move(out), std::move(inputs),
                        backward_fn);
}

template <typename T>
Tensor<T> batch_norm2d(const Tensor<T>& input, const Tensor<T>& gamma, const Tensor<T>& beta,
                       BatchNormStats<T>& stats, const BatchNormOptions& options) {
  require_rank4(input.shape(), "batch_norm2d");
  const int n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  if (gamma.numel() != sz(c) || beta.numel() != sz(c) || stats.mean.size() != sz(c) ||
      stats.var.size() != sz(c)) {
    throw ShapeError("batch_norm2d: parameter size does not match " + std::to_string(c) +
                     " channels");
  }
  if (!(options.eps > 0)) throw ConfigError("batch_norm2d: eps must be positive");
  const std::size_t hw = sz(h) * w;
  const std::size_t count = sz(n) * hw;
  if (options.training && count < 2) {
    throw ShapeError("batch_norm2d: training needs at least two values per channel");
  }
  const T* x = input.data().data();
  auto xhat = std::make_shared<std::vector<T>>(input.numel());
  auto inv_std = std::make_shared<std::vector<T>>(sz(c));
  std::vector<T> out(input.numel());

  for (int ch = 0; ch < c; ++ch) {
    T mean, var;
    if (options.training) {
      T acc = 0;
      for (int b = 0; b < n; ++b) {
        const T* p = x + (sz(b) * c + ch) * hw;
        for (std::size_t i = 0; i < hw; ++i) acc += p[i];
      }
      mean = acc / static_cast<T>(count);
      T sq = 0;
      for (int b = 0; b < n; ++b) {
        const T* p = x + (sz(b) * c + ch) * hw;
        for (std::size_t i = 0; i < hw; ++i) sq += (p[i] - mean) * (p[i] - mean);
      }
      var = sq / static_cast<T>(count);
      const T m = static_cast<T>(options.momentum);
      stats.mean[sz(ch)] = (T(1) - m) * stats.mean[sz(ch)] + m * mean;
      stats.var[sz(ch)] =
          (T(1) - m) * stats.var[sz(ch)] + m * (sq / static_cast<T>(count - 1));
    } else {
      mean = stats.mean[sz(ch)];
      var = stats.var[sz(ch)];
    }
    const T is = T(1) / std::sqrt(var + static_cast<T>(options.eps));
    (*inv_std)[sz(ch)] = is;
    const T g = gamma.data()[sz(ch)], bt = beta.data()[sz(ch)];
    for (int b = 0; b < n; ++b) {
      const std::size_t off = (sz(b) * c + ch) * hw;
      for (std::size_t i = 0; i < hw; ++i) {
        const T xh = (x[off + i] - mean) * is;
        (*xhat)[off + i] = xh;
        out[off + i] = g * xh + bt;
      }
    }
  }
  MacTrace::record(input.numel());

  const bool training = options.training;
  auto backward_fn = [=](Node<T>& self) {
    Node<T>& in = *self.inputs[0];
    Node<T>& gm = *self.inputs[1];
    Node<T>& bt = *self.inputs[2];
    const T* dy = self.grad.data();
    for (int ch = 0; ch < c; ++ch) {
      T sum_dy = 0, sum_dy_xhat = 0;
      for (int b = 0; b < n; ++b) {
        const std::size_t off = (sz(b) * c + ch) * hw;
        for (std::size_t i = 0; i < hw; ++i) {
          sum_dy += dy[off + i];
          sum_dy_xhat += dy[off + i] * (*xhat)[off + i];
        }
      }
      if (gm.requires_grad) gm.ensure_grad()[sz(ch)] += sum_dy_xhat;
      if (bt.requires_grad) bt.ensure_grad()[sz(ch)] += sum_dy;
      if (!in.requires_grad) continue;
      auto& dx = in.ensure_grad();
      const T scale = gm.value[sz(ch)] * (*inv_std)[sz(ch)];
      const T m = static_cast<T>(count);
      for (int b = 0; b < n; ++b) {
        const std::size_t off = (sz(b) * c + ch) * hw;
        for (std::size_t i = 0; i < hw; ++i) {
          if (training) {
            dx[off + i] += scale / m * (m * dy[off + i] - sum_dy - (*xhat)[off + i] * sum_dy_xhat);
          } else {
            dx[off + i] += scale * dy[off + i];
          }
        }
      }
    }
  };
  return make_result<T>("batch_norm2d", input.shape(), std::move(out), {input, gamma, beta},
                        backward_fn);
}

template <typename T>
Tensor<T> bilinear_resize(const Tensor<T>& input, int out_h, int out_w) {
  require_rank4(input.shape(), "bilinear_resize");
  if (out_h < 1 || out_w < 1) throw ShapeError("bilinear_resize: target size must be positive");
  const int n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  if (out_h == h && out_w == w) return input;
  const auto ty = resize_taps(h, out_h);
  const auto tx = resize_taps(w, out_w);
  const std::size_t planes = sz(n) * c;
  std::vector<T> out(planes * out_h * out_w);
  const T* x = input.data().data();
  for (std::size_t p = 0; p < planes; ++p) {
    const T* src = x + p * h * w;
    T* dst = out.data() + p * out_h * out_w;
    for (int oy = 0; oy < out_h; ++oy) {
      const auto& ry = ty[sz(oy)];
      const T fy = static_cast<T>(ry.frac);
      for (int ox = 0; ox < out_w; ++ox) {
        const auto& rx = tx[sz(ox)];
        const T fx = static_cast<T>(rx.frac);
        const T top = src[sz(ry.i0) * w + rx.i0] * (T(1) - fx) + src[sz(ry.i0) * w + rx.i1] * fx;
        const T bot = src[sz(ry.i1) * w + rx.i0] * (T(1) - fx) + src[sz(ry.i1) * w + rx.i1] * fx;
        dst[sz(oy) * out_w + ox] = top * (T(1) - fy) + bot * fy;
      }
    }
  }
  MacTrace::record(4 * out.size());
  auto backward_fn = [=](Node<T>& self) {
    Node<T>& in = *self.inputs[0];
    auto& dx = in.ensure_grad();
    for (std::size_t p = 0; p < planes; ++p) {
      T* d = dx.data() + p * h * w;
      const T* g = self.grad.data() + p * out_h * out_w;
      for (int oy = 0; oy < out_h; ++oy) {
        const auto& ry = ty[sz(oy)];
        const T fy = static_cast<T>(ry.frac);
        for (int ox = 0; ox < out_w; ++ox) {
          const auto& rx = tx[sz(ox)];
          const T fx = static_cast<T>(rx.frac);
          const T go = g[sz(oy) * out_w + ox];
          d[sz(ry.i0) * w + rx.i0] += go * (T(1) - fy) * (T(1) - fx);
          d[sz(ry.i0) * w + rx.i1] += go * (T(1) - fy) * fx;
          d[sz(ry.i1) * w + rx.i0] += go * fy * (T(1) - fx);
          d[sz(ry.i1) * w + rx.i1] += go * fy * fx;
        }
      }
    }
  };
  return make_result<T>("bilinear_resize", Shape{n, c, out_h, out_w}, std::move(out), {input},
                        backward_fn);
}

template <typename T>
Tensor<T> max_pool2d(const Tensor<T>& input, int kernel, int stride, int padding) {
  require_rank4(input.shape(), "max_pool2d");
  const int n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  if (kernel < 1 || stride < 1 || padding < 0 || 2 * padding > kernel) {
    throw ShapeError("max_pool2d: invalid kernel/stride/padding");
  }
  const int out_h = (h + 2 * padding - kernel) / stride + 1;
  const int out_w = (w + 2 * padding - kernel) / stride + 1;
  if (out_h < 1 || out_w < 1) throw ShapeError("max_pool2d: input too small");
  const std::size_t planes = sz(n) * c;
  std::vector<T> out(planes * out_h * out_w);
  auto argmax = std::make_shared<std::vector<std::size_t>>(out.size());
  const T* x = input.data().data();
  for (std::size_t p = 0; p < planes; ++p) {
    for (int oy = 0; oy < out_h; ++oy) {
      for (int ox = 0; ox < out_w; ++ox) {
        T best = -std::numeric_limits<T>::infinity();
        std::size_t best_idx = 0;
        for (int ky = 0; ky < kernel; ++ky) {
          const int iy = oy * stride - padding + ky;
          if (iy < 0 || iy >= h) continue;
          for (int kx = 0; kx < kernel; ++kx) {
            const int ix = ox * stride - padding + kx;
            if (ix < 0 || ix >= w) continue;
            const std::size_t idx = p * h * w + sz(iy) * w + ix;
            if (x[idx] > best) {
              best = x[idx];
              best_idx = idx;
            }
          }
        }
        const std::size_t o = p * out_h * out_w + sz(oy) * out_w + ox;
        out[o] = best;
        (*argmax)[o] = best_idx;
      }
    }
  }
  auto backward_fn = [argmax](Node<T>& self) {
    auto& dx = self.inputs[0]->ensure_grad();
    for (std::size_t o = 0; o < self.grad.size(); ++o) dx[(*argmax)[o]] += self.grad[o];
  };
  return make_result<T>("max_pool2d", Shape{n, c, out_h, out_w}, std::move(out), {input},
                        backward_fn);
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  std::vector<T> out(x.numel());
  const auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = in[i] > T(0) ? in[i] : T(0);
  auto backward_fn = [](Node<T>& self) {
    Node<T>& in_node = *self.inputs[0];
    auto& dx = in_node.ensure_grad();
    for (std::size_t i = 0; i < dx.size(); ++i) {
      if (in_node.value[i] > T(0)) dx[i] += self.grad[i];
    }
  };
  return make_result<T>("relu", x.shape(), std::move(out), {x}, backward_fn);
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  std::vector<T> out(x.numel());
  const auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const T v = in[i];
    if (v >= T(0)) {
      out[i] = T(1) / (T(1) + std::exp(-v));
    } else {
      const T e = std::exp(v);
      out[i] = e / (T(1) + e);
    }
  }
  auto backward_fn = [](Node<T>& self) {
    auto& dx = self.inputs[0]->ensure_grad();
    for (std::size_t i = 0; i < dx.size(); ++i) {
      const T y = self.value[i];
      dx[i] += self.grad[i] * y * (T(1) - y);
    }
  };
  return make_result<T>("sigmoid", x.shape(), std::move(out), {x}, backward_fn);
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  const Broadcast mode = broadcast_mode(a.shape(), b.shape(), "add");
  if (mode == Broadcast::kFirstIsGate) return add(b, a);
  std::vector<T> out(a.data().begin(), a.data().end());
  const auto bv = b.data();
  const std::size_t hw = mode == Broadcast::kNone ? 1 : sz(a.dim(2)) * a.dim(3);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i / hw];
  auto backward_fn = [hw](Node<T>& self) {
    Node<T>& na = *self.inputs[0];
    Node<T>& nb = *self.inputs[1];
    if (na.requires_grad) {
      auto& da = na.ensure_grad();
      for (std::size_t i = 0; i < da.size(); ++i) da[i] += self.grad[i];
    }
    if (nb.requires_grad) {
      auto& db = nb.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) db[i / hw] += self.grad[i];
    }
  };
  return make_result<T>("add", a.shape(), std::move(out), {a, b}, backward_fn);
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  const Broadcast mode = broadcast_mode(a.shape(), b.shape(), "mul");
  if (mode == Broadcast::kFirstIsGate) return mul(b, a);
  std::vector<T> out(a.numel());
  const auto av = a.data();
  const auto bv = b.data();
  const std::size_t hw = mode == Broadcast::kNone ? 1 : sz(a.dim(2)) * a.dim(3);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i / hw];
  MacTrace::record(out.size());
  auto backward_fn = [hw](Node<T>& self) {
    Node<T>& na = *self.inputs[0];
    Node<T>& nb = *self.inputs[1];
    if (na.requires_grad) {
      auto& da = na.ensure_grad();
      for (std::size_t i = 0; i < da.size(); ++i) da[i] += self.grad[i] * nb.value[i / hw];
    }
    if (nb.requires_grad) {
      auto& db = nb.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) db[i / hw] += self.grad[i] * na.value[i];
    }
  };
  return make_result<T>("mul", a.shape(), std::move(out), {a, b}, backward_fn);
}

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank4(a.shape(), "concat_channels");
  require_rank4(b.shape(), "concat_channels");
  if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3)) {
    throw ShapeError("concat_channels: N/H/W mismatch " + shape_to_string(a.shape()) + " vs " +
                     shape_to_string(b.shape()));
  }
  const int n = a.dim(0), ca = a.dim(1), cb = b.dim(1);
  const std::size_t hw = sz(a.dim(2)) * a.dim(3);
  std::vector<T> out(sz(n) * (ca + cb) * hw);
  for (int i = 0; i < n; ++i) {
    auto dst = out.begin() + static_cast<std::ptrdiff_t>(sz(i) * (ca + cb) * hw);
    auto sa = a.data().begin() + static_cast<std::ptrdiff_t>(sz(i) * ca * hw);
    auto sb = b.data().begin() + static_cast<std::ptrdiff_t>(sz(i) * cb * hw);
    dst = std::copy(sa, sa + static_cast<std::ptrdiff_t>(ca * hw), dst);
    std::copy(sb, sb + static_cast<std::ptrdiff_t>(cb * hw), dst);
  }
  auto backward_fn = [=](Node<T>& self) {
    for (int part = 0; part < 2; ++part) {
      Node<T>& in = *self.inputs[sz(part)];
      if (!in.requires_grad) continue;
      auto& d = in.ensure_grad();
      const int cc = part == 0 ? ca : cb;
      const int offset = part == 0 ? 0 : ca;
      for (int i = 0; i < n; ++i) {
        const T* g = self.grad.data() + (sz(i) * (ca + cb) + offset) * hw;
        T* dst = d.data() + sz(i) * cc * hw;
        for (std::size_t j = 0; j < sz(cc) * hw; ++j) dst[j] += g[j];
      }
    }
  };
  return make_result<T>("concat_channels", Shape{n, ca + cb, a.dim(2), a.dim(3)}, std::move(out),
                        {a, b}, backward_fn);
}

template <typename T>
Tensor<T> slice_channels(const Tensor<T>& x, int begin, int end) {
  require_rank4(x.shape(), "slice_channels");
  const int n = x.dim(0), c = x.dim(1);
  if (begin < 0 || end > c || begin >= end) throw ShapeError("slice_channels: invalid range");
  const std::size_t hw = sz(x.dim(2)) * x.dim(3);
  const int cs = end - begin;
  std::vector<T> out(sz(n) * cs * hw);
  for (int i = 0; i < n; ++i) {
    const T* src = x.data().data() + (sz(i) * c + begin) * hw;
    std::copy(src, src + sz(cs) * hw, out.begin() + static_cast<std::ptrdiff_t>(sz(i) * cs * hw));
  }
  auto backward_fn = [=](Node<T>& self) {
    auto& d = self.inputs[0]->ensure_grad();
    for (int i = 0; i < n; ++i) {
      T* dst = d.data() + (sz(i) * c + begin) * hw;
      const T* g = self.grad.data() + sz(i) * cs * hw;
      for (std::size_t j = 0; j < sz(cs) * hw; ++j) dst[j] += g[j];
    }
  };
  return make_result<T>("slice_channels", Shape{n, cs, x.dim(2), x.dim(3)}, std::move(out), {x},
                        backward_fn);
}

template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
  require_rank4(x.shape(), "global_avg_pool");
  const int n = x.dim(0), c = x.dim(1);
  const std::size_t hw = sz(x.dim(2)) * x.dim(3);
  std::vector<T> out(sz(n) * c);
  for (std::size_t p = 0; p < out.size(); ++p) {
    T acc = 0;
    const T* src = x.data().data() + p * hw;
    for (std::size_t i = 0; i < hw; ++i) acc += src[i];
    out[p] = acc / static_cast<T>(hw);
  }
  auto backward_fn = [hw](Node<T>& self) {
    auto& d = self.inputs[0]->ensure_grad();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += self.grad[i / hw] / static_cast<T>(hw);
  };
  return make_result<T>("global_avg_pool", Shape{n, c, 1, 1}, std::move(out), {x}, backward_fn);
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T acc = 0;
  for (T v : x.data()) acc += v;
  auto backward_fn = [](Node<T>& self) {
    auto& d = self.inputs[0]->ensure_grad();
    for (auto& v : d) v += self.grad[0];
  };
  return make_result<T>("sum", Shape{1}, std::vector<T>{acc}, {x}, backward_fn);
}

#define MCF_INSTANTIATE_OPS(T)                                                                    \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const std::optional<Tensor<T>>&, \
                            int, int);                                                            \
  template Tensor<T> batch_norm2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,          \
                                  BatchNormStats<T>&, const BatchNormOptions&);                  \
  template Tensor<T> bilinear_resize(const Tensor<T>&, int, int);                                \
  template Tensor<T> max_pool2d(const Tensor<T>&, int, int, int);                                \
  template Tensor<T> relu(const Tensor<T>&);                                                      \
  template Tensor<T> sigmoid(const Tensor<T>&);                                                   \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                     \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                     \
  template Tensor<T> concat_channels(const Tensor<T>&, const Tensor<T>&);                         \
  template Tensor<T> slice_channels(const Tensor<T>&, int, int);                                  \
  template Tensor<T> global_avg_pool(const Tensor<T>&);                                           \
  template Tensor<T> sum(const Tensor<T>&);

MCF_INSTANTIATE_OPS(float)
MCF_INSTANTIATE_OPS(double)

}  // namespace mcf
