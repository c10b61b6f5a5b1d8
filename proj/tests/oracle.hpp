#pragma once

// Scalar reference implementations. Plain loops over doubles; nothing here
// calls into the library's kernels, only reads tensors and parameter values.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "mcf/covariance.hpp"
#include "mcf/loss.hpp"
#include "mcf/network.hpp"

namespace ref {

// One sample's C×H×W feature map.
struct Map {
  int c = 0, h = 0, w = 0;
  std::vector<double> v;

  Map() = default;
  Map(int c_, int h_, int w_) : c(c_), h(h_), w(w_), v(static_cast<std::size_t>(c_) * h_ * w_, 0.0) {}
  double& at(int ch, int y, int x) { return v[(static_cast<std::size_t>(ch) * h + y) * w + x]; }
  double at(int ch, int y, int x) const { return v[(static_cast<std::size_t>(ch) * h + y) * w + x]; }
};

template <typename T>
Map sample(const mcf::Tensor<T>& t, int n = 0) {
  Map m(t.dim(1), t.dim(2), t.dim(3));
  for (int c = 0; c < m.c; ++c)
    for (int y = 0; y < m.h; ++y)
      for (int x = 0; x < m.w; ++x) m.at(c, y, x) = static_cast<double>(t.at(n, c, y, x));
  return m;
}

inline Map vec_map(const std::vector<double>& v) {
  Map m(static_cast<int>(v.size()), 1, 1);
  m.v = v;
  return m;
}

// Direct sliding window with zero padding.
template <typename T>
Map conv(const Map& x, const mcf::Tensor<T>& weight, const mcf::Tensor<T>* bias, int stride, int pad) {
  const int cout = weight.dim(0), cin = weight.dim(1), k = weight.dim(2);
  const int oh = (x.h + 2 * pad - k) / stride + 1, ow = (x.w + 2 * pad - k) / stride + 1;
  Map out(cout, oh, ow);
  for (int o = 0; o < cout; ++o)
    for (int y = 0; y < oh; ++y)
      for (int xx = 0; xx < ow; ++xx) {
        double acc = bias ? static_cast<double>(bias->data()[o]) : 0.0;
        for (int i = 0; i < cin; ++i)
          for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
              const int sy = y * stride - pad + ky, sx = xx * stride - pad + kx;
              if (sy < 0 || sy >= x.h || sx < 0 || sx >= x.w) continue;
              const double wv = weight.data()[((static_cast<std::size_t>(o) * cin + i) * k + ky) * k + kx];
              acc += wv * x.at(i, sy, sx);
            }
        out.at(o, y, xx) = acc;
      }
  return out;
}

template <typename T>
Map conv(const Map& x, const mcf::Conv2d<T>& layer) {
  return conv(x, layer.weight, &layer.bias, layer.stride, layer.padding);
}

// Half-pixel centres, source coordinate clamped to the edge.
inline double sample_bilinear(const Map& x, int c, double sy, double sx) {
  sy = std::clamp(sy, 0.0, static_cast<double>(x.h - 1));
  sx = std::clamp(sx, 0.0, static_cast<double>(x.w - 1));
  const int y0 = static_cast<int>(std::floor(sy)), x0 = static_cast<int>(std::floor(sx));
  const int y1 = std::min(y0 + 1, x.h - 1), x1 = std::min(x0 + 1, x.w - 1);
  const double fy = sy - y0, fx = sx - x0;
  return (1 - fy) * ((1 - fx) * x.at(c, y0, x0) + fx * x.at(c, y0, x1)) +
         fy * ((1 - fx) * x.at(c, y1, x0) + fx * x.at(c, y1, x1));
}

inline Map resize(const Map& x, int oh, int ow) {
  Map out(x.c, oh, ow);
  for (int c = 0; c < x.c; ++c)
    for (int y = 0; y < oh; ++y)
      for (int xx = 0; xx < ow; ++xx) {
        const double sy = (y + 0.5) * x.h / oh - 0.5;
        const double sx = (xx + 0.5) * x.w / ow - 0.5;
        out.at(c, y, xx) = sample_bilinear(x, c, sy, sx);
      }
  return out;
}

inline Map apply(Map x, double (*f)(double)) {
  for (auto& v : x.v) v = f(v);
  return x;
}
inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }
inline double relu(double z) { return z > 0 ? z : 0.0; }

inline Map add(const Map& a, const Map& b) {
  Map out = a;
  for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] += b.v[i];
  return out;
}

inline Map mul(const Map& a, const Map& b) {
  Map out = a;
  for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] *= b.v[i];
  return out;
}

// Multiplies channel c of x by g[c].
inline Map gate(const Map& x, const Map& g) {
  Map out = x;
  for (int c = 0; c < x.c; ++c)
    for (int y = 0; y < x.h; ++y)
      for (int xx = 0; xx < x.w; ++xx) out.at(c, y, xx) *= g.v[static_cast<std::size_t>(c)];
  return out;
}

inline Map concat(const Map& a, const Map& b) {
  Map out(a.c + b.c, a.h, a.w);
  std::copy(a.v.begin(), a.v.end(), out.v.begin());
  std::copy(b.v.begin(), b.v.end(), out.v.begin() + static_cast<std::ptrdiff_t>(a.v.size()));
  return out;
}

// cov(X, Y) = Σ (x_i − x̄)(y_i − ȳ) / (n − 1) over the n spatial positions.
inline std::vector<double> covariance(const Map& x, const Map& y) {
  const int n = x.h * x.w;
  std::vector<double> out(static_cast<std::size_t>(x.c));
  for (int c = 0; c < x.c; ++c) {
    double mx = 0, my = 0;
    for (int i = 0; i < n; ++i) {
      mx += x.v[static_cast<std::size_t>(c) * n + i];
      my += y.v[static_cast<std::size_t>(c) * n + i];
    }
    mx /= n;
    my /= n;
    double s = 0;
    for (int i = 0; i < n; ++i) {
      s += (x.v[static_cast<std::size_t>(c) * n + i] - mx) * (y.v[static_cast<std::size_t>(c) * n + i] - my);
    }
    out[static_cast<std::size_t>(c)] = s / (n - 1);
  }
  return out;
}

// Dense matrix-vector form of a 1×1 conv.
template <typename T>
std::vector<double> matvec(const mcf::Conv2d<T>& layer, const std::vector<double>& v) {
  const int rows = layer.out_channels(), cols = layer.in_channels();
  std::vector<double> out(static_cast<std::size_t>(rows));
  for (int r = 0; r < rows; ++r) {
    double acc = layer.bias.data()[r];
    for (int c = 0; c < cols; ++c) acc += layer.weight.data()[static_cast<std::size_t>(r) * cols + c] * v[c];
    out[static_cast<std::size_t>(r)] = acc;
  }
  return out;
}

template <typename T>
std::vector<double> adjust(const mcf::AdjustmentBlock<T>& block, const std::vector<double>& v) {
  if (!block.enabled()) return v;
  std::vector<double> hidden = matvec(block.reduce, v);
  for (auto& h : hidden) h = relu(h);
  return matvec(block.expand, hidden);
}

template <typename T>
Map channel_gate(const mcf::Conv2d<T>& mask, const std::vector<double>& v) {
  return apply(conv(vec_map(v), mask), sigmoid);
}

template <typename T>
Map cffm(const mcf::Cffm<T>& m, const Map& xh, const Map& xl) {
  const Map ph = conv(xh, m.project_high);
  const Map pl = conv(xl, m.project_low);
  const std::vector<double> vh = covariance(ph, resize(pl, xh.h, xh.w));
  const std::vector<double> vl = covariance(resize(ph, xl.h, xl.w), pl);
  const Map a = channel_gate(m.mask_high, adjust(m.adjust_high, vh));
  const Map b = channel_gate(m.mask_low, adjust(m.adjust_low, vl));
  if (m.options().prose_variant) return concat(resize(gate(xh, b), xl.h, xl.w), gate(xl, a));
  return concat(resize(gate(xh, a), xl.h, xl.w), gate(xl, b));
}

template <typename T>
Map cfrm(const mcf::Cfrm<T>& m, const Map& x) {
  const Map c = channel_gate(m.mask, adjust(m.adjust, covariance(x, x)));
  return gate(conv(x, m.refine), c);
}

template <typename T>
Map lgate(const mcf::LGate<T>& m, const Map& x1, const Map& x2, const Map& x3) {
  const Map* in[3] = {&x1, &x2, &x3};
  Map f[3];
  for (int i = 0; i < 3; ++i) {
    const Map h = resize(conv(*in[i], m.harmonize[i]), x1.h, x1.w);
    f[i] = mul(h, apply(conv(h, m.gate[i]), sigmoid));
  }
  return conv(concat(add(f[0], f[1]), f[2]), m.fuse);
}

// Two-pass batch statistics, biased variance.
inline Map batch_norm_train(const std::vector<Map>& batch, int c, const std::vector<double>& gamma,
                            const std::vector<double>& beta, double eps, std::size_t n_index) {
  double mean = 0;
  std::size_t count = 0;
  for (const auto& m : batch)
    for (int y = 0; y < m.h; ++y)
      for (int x = 0; x < m.w; ++x, ++count) mean += m.at(c, y, x);
  mean /= static_cast<double>(count);
  double var = 0;
  for (const auto& m : batch)
    for (int y = 0; y < m.h; ++y)
      for (int x = 0; x < m.w; ++x) var += (m.at(c, y, x) - mean) * (m.at(c, y, x) - mean);
  var /= static_cast<double>(count);
  const Map& src = batch[n_index];
  Map out(1, src.h, src.w);
  for (int y = 0; y < src.h; ++y)
    for (int x = 0; x < src.w; ++x) {
      out.at(0, y, x) = gamma[c] * (src.at(c, y, x) - mean) / std::sqrt(var + eps) + beta[c];
    }
  return out;
}

// Largest |t[n] − r| over one sample.
template <typename T>
double max_abs_diff(const mcf::Tensor<T>& t, const Map& r, int n) {
  if (t.dim(1) != r.c || t.dim(2) != r.h || t.dim(3) != r.w) return INFINITY;
  double worst = 0;
  for (int c = 0; c < r.c; ++c)
    for (int i = 0; i < r.h; ++i)
      for (int j = 0; j < r.w; ++j) worst = std::max(worst, std::abs(double(t.at(n, c, i, j)) - r.at(c, i, j)));
  return worst;
}

// Poly decay with exponential warmup, straight from the formulas.
inline double learning_rate(int iter, double lr_i, double power, int max_iter, int warmup, double factor) {
  if (iter > max_iter) return 0.0;
  auto poly = [&](int i) { return lr_i * std::pow(1.0 - static_cast<double>(i) / max_iter, power); };
  if (iter < warmup) return poly(warmup) * std::pow(factor, 1.0 - static_cast<double>(iter) / warmup);
  return poly(iter);
}

// Hard-pixel selection by sorting: every valid pixel under the threshold, or
// failing that the min_kept largest losses (stable, so lower index wins ties).
inline std::vector<std::uint8_t> ohem_keep(const mcf::PixelStats<double>& s, double threshold,
                                           std::size_t min_kept) {
  const std::size_t n = s.loss.size();
  std::vector<std::uint8_t> keep(n, 0);
  std::size_t hard = 0;
  for (std::size_t i = 0; i < n; ++i) hard += s.valid[i] && s.target_prob[i] < threshold;
  if (hard >= min_kept) {
    for (std::size_t i = 0; i < n; ++i) keep[i] = s.valid[i] && s.target_prob[i] < threshold;
    return keep;
  }
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < n; ++i) {
    if (s.valid[i]) order.push_back(i);
  }
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return s.loss[a] > s.loss[b]; });
  for (std::size_t k = 0; k < std::min(min_kept, order.size()); ++k) keep[order[k]] = 1;
  return keep;
}


// Closed-form parameter and MAC tally of a model, written out layer by layer.
struct Tally {
  std::uint64_t params = 0;
  std::uint64_t macs = 0;

  // Returns the output extent.
  int conv(int cin, int cout, int k, int stride, int pad, int h, int w, int* ow = nullptr) {
    const int oh = (h + 2 * pad - k) / stride + 1;
    const int oww = (w + 2 * pad - k) / stride + 1;
    params += static_cast<std::uint64_t>(cout) * cin * k * k + cout;
    macs += static_cast<std::uint64_t>(cout) * oh * oww * cin * k * k;
    if (ow) *ow = oww;
    return oh;
  }
  void bn(int c, int h, int w) {
    params += 2ull * c;
    macs += static_cast<std::uint64_t>(c) * h * w;
  }
  void resize(int c, int h, int w, int oh, int ow) {
    if (h != oh || w != ow) macs += 4ull * c * oh * ow;
  }
  void elementwise_mul(int c, int h, int w) { macs += static_cast<std::uint64_t>(c) * h * w; }
  void covariance(int c, int h, int w) { macs += static_cast<std::uint64_t>(c) * h * w; }
  void adjust(int c, int r, bool on) {
    if (!on) return;
    const int hidden = std::max(1, c / r);
    conv(c, hidden, 1, 1, 0, 1, 1);
    conv(hidden, c, 1, 1, 0, 1, 1);
  }
};

// `cfg` must already be resolved (width multiplier applied).
inline Tally tally_model(const mcf::ModelConfig& cfg, int H, int W) {
  Tally t;
  int w = 0;
  // spatial path
  int sh = H, sw = W;
  int cin = cfg.input_channels;
  const int kernels[3] = {7, 3, 3};
  for (int i = 0; i < 3; ++i) {
    const int k = kernels[i];
    sh = t.conv(cin, cfg.spatial_widths[i], k, 2, k / 2, sh, sw, &w);
    sw = w;
    t.bn(cfg.spatial_widths[i], sh, sw);
    cin = cfg.spatial_widths[i];
  }
  const int cs = cin, hs = sh, ws = sw;

  // context path
  int h = t.conv(cfg.input_channels, cfg.backbone_widths[0], 7, 2, 3, H, W, &w);
  t.bn(cfg.backbone_widths[0], h, w);
  h = (h + 2 - 3) / 2 + 1;
  w = (w + 2 - 3) / 2 + 1;
  int c = cfg.backbone_widths[0];
  int fh[4], fw[4];
  for (int s = 0; s < 4; ++s) {
    for (int b = 0; b < cfg.backbone_blocks[s]; ++b) {
      const int stride = (s > 0 && b == 0) ? 2 : 1;
      const int out = cfg.backbone_widths[s];
      int w1 = 0;
      const int h1 = t.conv(c, out, 3, stride, 1, h, w, &w1);
      t.bn(out, h1, w1);
      t.conv(out, out, 3, 1, 1, h1, w1);
      t.bn(out, h1, w1);
      if (stride != 1 || c != out) {
        t.conv(c, out, 1, stride, 0, h, w);
        t.bn(out, h1, w1);
      }
      h = h1;
      w = w1;
      c = out;
    }
    fh[s] = h;
    fw[s] = w;
  }
  const int c8 = cfg.backbone_widths[1], c16 = cfg.backbone_widths[2], c32 = cfg.backbone_widths[3];
  const int cg = cfg.gate_channels;

  if (cfg.use_lgate) {
    t.conv(c8, cg, 1, 1, 0, fh[1], fw[1]);
    t.conv(c16, cg, 1, 1, 0, fh[2], fw[2]);
    t.resize(cg, fh[2], fw[2], fh[1], fw[1]);
    t.conv(c32, cg, 1, 1, 0, fh[3], fw[3]);
    t.resize(cg, fh[3], fw[3], fh[1], fw[1]);
    for (int i = 0; i < 3; ++i) {
      t.conv(cg, cg, 3, 1, 1, fh[1], fw[1]);
      t.elementwise_mul(cg, fh[1], fw[1]);
    }
    t.conv(2 * cg, cg, 3, 1, 1, fh[1], fw[1]);
  } else {
    t.resize(c16, fh[2], fw[2], fh[1], fw[1]);
    t.resize(c32, fh[3], fw[3], fh[1], fw[1]);
    t.conv(c8 + c16 + c32, cg, 1, 1, 0, fh[1], fw[1]);
  }
  const int hc = fh[1], wc = fw[1];

  if (cfg.use_cffm) {
    const int cf = cfg.fused_channels;
    t.conv(cg, cf, 1, 1, 0, hc, wc);
    t.conv(cs, cf, 1, 1, 0, hs, ws);
    t.resize(cf, hs, ws, hc, wc);
    t.covariance(cf, hc, wc);
    t.resize(cf, hc, wc, hs, ws);
    t.covariance(cf, hs, ws);
    t.adjust(cf, cfg.reduction, cfg.use_adjust);
    t.adjust(cf, cfg.reduction, cfg.use_adjust);
    const int a_ch = cfg.cffm_prose_variant ? cs : cg;
    const int b_ch = cfg.cffm_prose_variant ? cg : cs;
    t.conv(cf, a_ch, 3, 1, 1, 1, 1);
    t.conv(cf, b_ch, 3, 1, 1, 1, 1);
    t.elementwise_mul(cg, hc, wc);
    t.resize(cg, hc, wc, hs, ws);
    t.elementwise_mul(cs, hs, ws);
  } else {
    t.resize(cg, hc, wc, hs, ws);
  }

  const int f = cfg.ffm_width;
  t.conv(cg + cs, f, 3, 1, 1, hs, ws);
  t.bn(f, hs, ws);
  const int hidden = std::max(1, f / cfg.reduction);
  t.conv(f, hidden, 1, 1, 0, 1, 1);
  t.conv(hidden, f, 1, 1, 0, 1, 1);
  t.elementwise_mul(f, hs, ws);

  if (cfg.use_cfrm) {
    t.covariance(f, hs, ws);
    t.adjust(f, cfg.reduction, cfg.use_adjust);
    t.conv(f, f, 3, 1, 1, 1, 1);
    t.conv(f, f, 3, 1, 1, hs, ws);
    t.elementwise_mul(f, hs, ws);
  }
  t.conv(f, cfg.num_classes, 1, 1, 0, hs, ws);
  t.resize(cfg.num_classes, hs, ws, H, W);
  return t;
}

}  // namespace ref
