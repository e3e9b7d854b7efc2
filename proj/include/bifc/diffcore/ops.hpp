#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bifc/diffcore/tape.hpp"
#include "bifc/diffcore/tensor.hpp"

namespace bifc {

namespace ops {

using Inputs = std::span<const Tensor* const>;
using GradInputs = std::span<Tensor* const>;

// ---------------------------------------------------------------------------
// Convolution

/// Same-padding offsets for a k x k kernel. Even kernels put the extra pad
/// row/column on the bottom/right, i.e. the window starts (k-1)/2 before.
inline int pad_before(std::size_t k) { return static_cast<int>((k - 1) / 2); }

class Conv2d final : public Op {
 public:
  const char* name() const override { return "conv2d"; }

  Tensor forward(Inputs in) override {
    const Tensor& x = *in[0];
    const Tensor& w = *in[1];
    const std::size_t cin = x.dim(0), h = x.dim(1), wd = x.dim(2);
    const std::size_t cout = w.dim(0), k = w.dim(2);
    const int p = pad_before(k);
    Tensor out({cout, h, wd});
    for (std::size_t co = 0; co < cout; ++co) {
      double* oc = out.data() + co * h * wd;
      for (std::size_t ci = 0; ci < cin; ++ci) {
        const double* ic = x.data() + ci * h * wd;
        for (std::size_t ky = 0; ky < k; ++ky) {
          const int dy = static_cast<int>(ky) - p;
          const auto [y0, y1] = valid_range(dy, h);
          for (std::size_t kx = 0; kx < k; ++kx) {
            const int dx = static_cast<int>(kx) - p;
            const auto [x0, x1] = valid_range(dx, wd);
            const double wv = w[((co * cin + ci) * k + ky) * k + kx];
            for (int y = y0; y < y1; ++y) {
              double* orow = oc + y * wd;
              const double* irow = ic + (y + dy) * static_cast<int>(wd) + dx;
              for (int xx = x0; xx < x1; ++xx) orow[xx] += wv * irow[xx];
            }
          }
        }
      }
    }
    return out;
  }

  void backward(Inputs in, const Tensor&, const Tensor& g,
                GradInputs gin) override {
    const Tensor& x = *in[0];
    const Tensor& w = *in[1];
    const std::size_t cin = x.dim(0), h = x.dim(1), wd = x.dim(2);
    const std::size_t cout = w.dim(0), k = w.dim(2);
    const int p = pad_before(k);
    for (std::size_t co = 0; co < cout; ++co) {
      const double* gc = g.data() + co * h * wd;
      for (std::size_t ci = 0; ci < cin; ++ci) {
        const double* ic = x.data() + ci * h * wd;
        double* gic = gin[0] ? gin[0]->data() + ci * h * wd : nullptr;
        for (std::size_t ky = 0; ky < k; ++ky) {
          const int dy = static_cast<int>(ky) - p;
          const auto [y0, y1] = valid_range(dy, h);
          for (std::size_t kx = 0; kx < k; ++kx) {
            const int dx = static_cast<int>(kx) - p;
            const auto [x0, x1] = valid_range(dx, wd);
            const std::size_t widx = ((co * cin + ci) * k + ky) * k + kx;
            const double wv = w[widx];
            double acc = 0.0;
            for (int y = y0; y < y1; ++y) {
              const double* grow = gc + y * wd;
              const int off = (y + dy) * static_cast<int>(wd) + dx;
              if (gic) {
                double* girow = gic + off;
                for (int xx = x0; xx < x1; ++xx) girow[xx] += wv * grow[xx];
              }
              const double* irow = ic + off;
              for (int xx = x0; xx < x1; ++xx) acc += grow[xx] * irow[xx];
            }
            if (gin[1]) (*gin[1])[widx] += acc;
          }
        }
      }
    }
  }

 private:
  // Output rows/cols whose shifted source index stays inside [0, n).
  static std::pair<int, int> valid_range(int shift, std::size_t n) {
    const int ni = static_cast<int>(n);
    return {std::max(0, -shift), std::min(ni, ni - shift)};
  }
};

// ---------------------------------------------------------------------------
// Elementwise

template <class Fn, class Deriv>
class Unary : public Op {
 public:
  Unary(const char* name, Fn fn, Deriv deriv)
      : name_(name), fn_(fn), deriv_(deriv) {}
  const char* name() const override { return name_; }
  Tensor forward(Inputs in) override {
    Tensor out = *in[0];
    for (double& v : out.values()) v = fn_(v);
    return out;
  }
  void backward(Inputs in, const Tensor& out, const Tensor& g,
                GradInputs gin) override {
    if (!gin[0]) return;
    const Tensor& x = *in[0];
    for (std::size_t i = 0; i < x.size(); ++i) {
      (*gin[0])[i] += g[i] * deriv_(x[i], out[i]);
    }
  }

 private:
  const char* name_;
  Fn fn_;
  Deriv deriv_;
};

/// Elementwise op whose derivative has kinks at fixed input thresholds.
template <class Fn, class Deriv, class Branch>
class PiecewiseUnary final : public Unary<Fn, Deriv> {
 public:
  PiecewiseUnary(const char* name, Fn fn, Deriv deriv, Branch branch)
      : Unary<Fn, Deriv>(name, fn, deriv), branch_(branch) {}
  void signature(Inputs in, std::uint64_t& hash) const override {
    std::uint64_t word = 0;
    std::size_t bits = 0;
    for (double v : in[0]->values()) {
      word = word * 3 + static_cast<std::uint64_t>(branch_(v));
      if (++bits == 32) {
        mix_hash(hash, word);
        word = 0;
        bits = 0;
      }
    }
    mix_hash(hash, word);
  }

 private:
  Branch branch_;
};

class Add final : public Op {
 public:
  const char* name() const override { return "add"; }
  Tensor forward(Inputs in) override {
    Tensor out = *in[0];
    out += *in[1];
    return out;
  }
  void backward(Inputs, const Tensor&, const Tensor& g, GradInputs gin) override {
    for (Tensor* gi : gin) {
      if (gi) *gi += g;
    }
  }
};

class Sub final : public Op {
 public:
  const char* name() const override { return "sub"; }
  Tensor forward(Inputs in) override {
    Tensor out = *in[0];
    const Tensor& b = *in[1];
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
    return out;
  }
  void backward(Inputs, const Tensor&, const Tensor& g, GradInputs gin) override {
    if (gin[0]) *gin[0] += g;
    if (gin[1]) {
      for (std::size_t i = 0; i < g.size(); ++i) (*gin[1])[i] -= g[i];
    }
  }
};

class Mul final : public Op {
 public:
  const char* name() const override { return "mul"; }
  Tensor forward(Inputs in) override {
    Tensor out = *in[0];
    const Tensor& b = *in[1];
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b[i];
    return out;
  }
  void backward(Inputs in, const Tensor&, const Tensor& g,
                GradInputs gin) override {
    const Tensor& a = *in[0];
    const Tensor& b = *in[1];
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (gin[0]) (*gin[0])[i] += g[i] * b[i];
      if (gin[1]) (*gin[1])[i] += g[i] * a[i];
    }
  }
};

class Scale final : public Op {
 public:
  explicit Scale(double s) : s_(s) {}
  const char* name() const override { return "scale"; }
  Tensor forward(Inputs in) override {
    Tensor out = *in[0];
    out *= s_;
    return out;
  }
  void backward(Inputs, const Tensor&, const Tensor& g, GradInputs gin) override {
    if (!gin[0]) return;
    for (std::size_t i = 0; i < g.size(); ++i) (*gin[0])[i] += s_ * g[i];
  }

 private:
  double s_;
};

// ---------------------------------------------------------------------------
// Channel-wise ops on C x H x W maps

/// x + b with b (C) broadcast over each channel's plane.
class AddChannelBias final : public Op {
 public:
  const char* name() const override { return "add_channel_bias"; }
  Tensor forward(Inputs in) override {
    Tensor out = *in[0];
    const Tensor& b = *in[1];
    const std::size_t plane = out.dim(1) * out.dim(2);
    for (std::size_t c = 0; c < out.dim(0); ++c) {
      double* p = out.data() + c * plane;
      for (std::size_t i = 0; i < plane; ++i) p[i] += b[c];
    }
    return out;
  }
  void backward(Inputs, const Tensor&, const Tensor& g, GradInputs gin) override {
    if (gin[0]) *gin[0] += g;
    if (gin[1]) {
      const std::size_t plane = g.dim(1) * g.dim(2);
      for (std::size_t c = 0; c < g.dim(0); ++c) {
        double acc = 0.0;
        for (std::size_t i = 0; i < plane; ++i) acc += g[c * plane + i];
        (*gin[1])[c] += acc;
      }
    }
  }
};

/// x (C x H x W) times w (C), one factor per channel.
class MulChannel final : public Op {
 public:
  const char* name() const override { return "mul_channel"; }
  Tensor forward(Inputs in) override {
    Tensor out = *in[0];
    const Tensor& w = *in[1];
    const std::size_t plane = out.dim(1) * out.dim(2);
    for (std::size_t c = 0; c < out.dim(0); ++c) {
      double* p = out.data() + c * plane;
      for (std::size_t i = 0; i < plane; ++i) p[i] *= w[c];
    }
    return out;
  }
  void backward(Inputs in, const Tensor&, const Tensor& g,
                GradInputs gin) override {
    const Tensor& x = *in[0];
    const Tensor& w = *in[1];
    const std::size_t plane = x.dim(1) * x.dim(2);
    for (std::size_t c = 0; c < x.dim(0); ++c) {
      double acc = 0.0;
      for (std::size_t i = 0; i < plane; ++i) {
        const std::size_t e = c * plane + i;
        if (gin[0]) (*gin[0])[e] += g[e] * w[c];
        acc += g[e] * x[e];
      }
      if (gin[1]) (*gin[1])[c] += acc;
    }
  }
};

/// a (C x H x W) minus b (1 x H x W) broadcast over channels.
class SubBroadcast final : public Op {
 public:
  const char* name() const override { return "sub_broadcast"; }
  Tensor forward(Inputs in) override {
    Tensor out = *in[0];
    const Tensor& b = *in[1];
    const std::size_t plane = out.dim(1) * out.dim(2);
    for (std::size_t c = 0; c < out.dim(0); ++c) {
      for (std::size_t i = 0; i < plane; ++i) out[c * plane + i] -= b[i];
    }
    return out;
  }
  void backward(Inputs, const Tensor&, const Tensor& g, GradInputs gin) override {
    if (gin[0]) *gin[0] += g;
    if (gin[1]) {
      const std::size_t plane = g.dim(1) * g.dim(2);
      for (std::size_t c = 0; c < g.dim(0); ++c) {
        for (std::size_t i = 0; i < plane; ++i) {
          (*gin[1])[i] -= g[c * plane + i];
        }
      }
    }
  }
};

/// Per-pixel reduction across channels: sum, or mean when `mean` is set.
class ChannelReduce final : public Op {
 public:
  explicit ChannelReduce(bool mean) : mean_(mean) {}
  const char* name() const override {
    return mean_ ? "channel_mean" : "channel_sum";
  }
  Tensor forward(Inputs in) override {
    const Tensor& x = *in[0];
    const std::size_t c = x.dim(0), plane = x.dim(1) * x.dim(2);
    Tensor out({1, x.dim(1), x.dim(2)});
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t i = 0; i < plane; ++i) out[i] += x[ch * plane + i];
    }
    if (mean_) out *= 1.0 / static_cast<double>(c);
    return out;
  }
  void backward(Inputs in, const Tensor&, const Tensor& g,
                GradInputs gin) override {
    if (!gin[0]) return;
    const Tensor& x = *in[0];
    const std::size_t c = x.dim(0), plane = x.dim(1) * x.dim(2);
    const double f = mean_ ? 1.0 / static_cast<double>(c) : 1.0;
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t i = 0; i < plane; ++i) {
        (*gin[0])[ch * plane + i] += f * g[i];
      }
    }
  }

 private:
  bool mean_;
};

/// Global average pooling: C x H x W -> C.
class Gap final : public Op {
 public:
  const char* name() const override { return "gap"; }
  Tensor forward(Inputs in) override {
    const Tensor& x = *in[0];
    const std::size_t plane = x.dim(1) * x.dim(2);
    Tensor out({x.dim(0)});
    for (std::size_t c = 0; c < x.dim(0); ++c) {
      double acc = 0.0;
      for (std::size_t i = 0; i < plane; ++i) acc += x[c * plane + i];
      out[c] = acc / static_cast<double>(plane);
    }
    return out;
  }
  void backward(Inputs in, const Tensor&, const Tensor& g,
                GradInputs gin) override {
    if (!gin[0]) return;
    const Tensor& x = *in[0];
    const std::size_t plane = x.dim(1) * x.dim(2);
    for (std::size_t c = 0; c < x.dim(0); ++c) {
      const double v = g[c] / static_cast<double>(plane);
      for (std::size_t i = 0; i < plane; ++i) (*gin[0])[c * plane + i] += v;
    }
  }
};

/// y = W x + b with W (N_out x N_in).
class Dense final : public Op {
 public:
  const char* name() const override { return "dense"; }
  Tensor forward(Inputs in) override {
    const Tensor& x = *in[0];
    const Tensor& w = *in[1];
    const Tensor& b = *in[2];
    const std::size_t no = w.dim(0), ni = w.dim(1);
    Tensor out({no});
    for (std::size_t o = 0; o < no; ++o) {
      double acc = 0.0;
      for (std::size_t i = 0; i < ni; ++i) acc += w[o * ni + i] * x[i];
      out[o] = acc + b[o];
    }
    return out;
  }
  void backward(Inputs in, const Tensor&, const Tensor& g,
                GradInputs gin) override {
    const Tensor& x = *in[0];
    const Tensor& w = *in[1];
    const std::size_t no = w.dim(0), ni = w.dim(1);
    for (std::size_t o = 0; o < no; ++o) {
      for (std::size_t i = 0; i < ni; ++i) {
        if (gin[0]) (*gin[0])[i] += g[o] * w[o * ni + i];
        if (gin[1]) (*gin[1])[o * ni + i] += g[o] * x[i];
      }
      if (gin[2]) (*gin[2])[o] += g[o];
    }
  }
};

/// Concatenation along the leading axis.
class Concat final : public Op {
 public:
  const char* name() const override { return "concat"; }
  Tensor forward(Inputs in) override {
    Shape shape = in[0]->shape();
    shape[0] = 0;
    for (const Tensor* t : in) shape[0] += t->dim(0);
    Tensor out(shape);
    std::size_t off = 0;
    for (const Tensor* t : in) {
      std::copy(t->data(), t->data() + t->size(), out.data() + off);
      off += t->size();
    }
    return out;
  }
  void backward(Inputs in, const Tensor&, const Tensor& g,
                GradInputs gin) override {
    std::size_t off = 0;
    for (std::size_t k = 0; k < in.size(); ++k) {
      if (gin[k]) {
        for (std::size_t i = 0; i < in[k]->size(); ++i) {
          (*gin[k])[i] += g[off + i];
        }
      }
      off += in[k]->size();
    }
  }
};

/// Leading-axis slice [begin, end).
class Slice final : public Op {
 public:
  Slice(std::size_t begin, std::size_t end) : begin_(begin), end_(end) {}
  const char* name() const override { return "slice"; }
  Tensor forward(Inputs in) override {
    const Tensor& x = *in[0];
    Shape shape = x.shape();
    const std::size_t inner = x.size() / shape[0];
    shape[0] = end_ - begin_;
    Tensor out(shape);
    std::copy(x.data() + begin_ * inner, x.data() + end_ * inner, out.data());
    return out;
  }
  void backward(Inputs in, const Tensor&, const Tensor& g,
                GradInputs gin) override {
    if (!gin[0]) return;
    const std::size_t inner = in[0]->size() / in[0]->dim(0);
    for (std::size_t i = 0; i < g.size(); ++i) {
      (*gin[0])[begin_ * inner + i] += g[i];
    }
  }

 private:
  std::size_t begin_, end_;
};

// ---------------------------------------------------------------------------
// Resolution changes

class AvgPool2 final : public Op {
 public:
  const char* name() const override { return "avg_pool2"; }
  Tensor forward(Inputs in) override {
    const Tensor& x = *in[0];
    const std::size_t c = x.dim(0), h = x.dim(1) / 2, w = x.dim(2) / 2;
    Tensor out({c, h, w});
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t xx = 0; xx < w; ++xx) {
          out.at(ch, y, xx) =
              0.25 * (x.at(ch, 2 * y, 2 * xx) + x.at(ch, 2 * y, 2 * xx + 1) +
                      x.at(ch, 2 * y + 1, 2 * xx) +
                      x.at(ch, 2 * y + 1, 2 * xx + 1));
        }
      }
    }
    return out;
  }
  void backward(Inputs, const Tensor&, const Tensor& g, GradInputs gin) override {
    if (!gin[0]) return;
    Tensor& gi = *gin[0];
    for (std::size_t ch = 0; ch < g.dim(0); ++ch) {
      for (std::size_t y = 0; y < g.dim(1); ++y) {
        for (std::size_t xx = 0; xx < g.dim(2); ++xx) {
          const double v = 0.25 * g.at(ch, y, xx);
          gi.at(ch, 2 * y, 2 * xx) += v;
          gi.at(ch, 2 * y, 2 * xx + 1) += v;
          gi.at(ch, 2 * y + 1, 2 * xx) += v;
          gi.at(ch, 2 * y + 1, 2 * xx + 1) += v;
        }
      }
    }
  }
};

/// Bilinear upsampling by an integer factor with half-pixel centers and
/// edge clamping.
class UpsampleBilinear final : public Op {
 public:
  explicit UpsampleBilinear(std::size_t factor) : factor_(factor) {}
  const char* name() const override { return "upsample_bilinear"; }

  Tensor forward(Inputs in) override {
    const Tensor& x = *in[0];
    const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
    const auto ty = taps(h), tx = taps(w);
    Tensor out({c, h * factor_, w * factor_});
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t y = 0; y < h * factor_; ++y) {
        const Tap& a = ty[y];
        for (std::size_t xx = 0; xx < w * factor_; ++xx) {
          const Tap& b = tx[xx];
          out.at(ch, y, xx) = a.w0 * (b.w0 * x.at(ch, a.i0, b.i0) +
                                      b.w1 * x.at(ch, a.i0, b.i1)) +
                              a.w1 * (b.w0 * x.at(ch, a.i1, b.i0) +
                                      b.w1 * x.at(ch, a.i1, b.i1));
        }
      }
    }
    return out;
  }

  void backward(Inputs in, const Tensor&, const Tensor& g,
                GradInputs gin) override {
    if (!gin[0]) return;
    const Tensor& x = *in[0];
    const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
    const auto ty = taps(h), tx = taps(w);
    Tensor& gi = *gin[0];
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t y = 0; y < h * factor_; ++y) {
        const Tap& a = ty[y];
        for (std::size_t xx = 0; xx < w * factor_; ++xx) {
          const Tap& b = tx[xx];
          const double v = g.at(ch, y, xx);
          gi.at(ch, a.i0, b.i0) += a.w0 * b.w0 * v;
          gi.at(ch, a.i0, b.i1) += a.w0 * b.w1 * v;
          gi.at(ch, a.i1, b.i0) += a.w1 * b.w0 * v;
          gi.at(ch, a.i1, b.i1) += a.w1 * b.w1 * v;
        }
      }
    }
  }

 private:
  struct Tap {
    std::size_t i0, i1;
    double w0, w1;
  };

  std::vector<Tap> taps(std::size_t n) const {
    std::vector<Tap> t(n * factor_);
    for (std::size_t o = 0; o < n * factor_; ++o) {
      double src = (static_cast<double>(o) + 0.5) / static_cast<double>(factor_) - 0.5;
      src = std::clamp(src, 0.0, static_cast<double>(n - 1));
      const auto i0 = static_cast<std::size_t>(std::floor(src));
      const std::size_t i1 = std::min(i0 + 1, n - 1);
      const double f = src - static_cast<double>(i0);
      t[o] = Tap{i0, i1, 1.0 - f, f};
    }
    return t;
  }

  std::size_t factor_;
};

// ---------------------------------------------------------------------------
// Geometric resampling

/// Bilinear sampling of a C x H x W image through a 2x3 map from centered
/// destination pixel coordinates to centered source pixel coordinates:
///   src - c = A (dst - c) + b,   c = ((W-1)/2, (H-1)/2),
/// theta = (A00, A01, b0, A10, A11, b1). Samples falling outside the frame
/// read zero. Differentiable w.r.t. both the image and theta.
class AffineResample final : public Op {
 public:
  const char* name() const override { return "affine_resample"; }

  Tensor forward(Inputs in) override {
    const Tensor& img = *in[0];
    const Tensor& th = *in[1];
    const std::size_t c = img.dim(0), h = img.dim(1), w = img.dim(2);
    Tensor out({c, h, w});
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        const Sample s = locate(th, x, y, h, w);
        for (std::size_t ch = 0; ch < c; ++ch) {
          out.at(ch, y, x) = s.w00 * read(img, ch, s.x0, s.y0) +
                             s.w01 * read(img, ch, s.x0 + 1, s.y0) +
                             s.w10 * read(img, ch, s.x0, s.y0 + 1) +
                             s.w11 * read(img, ch, s.x0 + 1, s.y0 + 1);
        }
      }
    }
    return out;
  }

  void backward(Inputs in, const Tensor&, const Tensor& g,
                GradInputs gin) override {
    const Tensor& img = *in[0];
    const Tensor& th = *in[1];
    const std::size_t c = img.dim(0), h = img.dim(1), w = img.dim(2);
    const double cx = (static_cast<double>(w) - 1.0) / 2.0;
    const double cy = (static_cast<double>(h) - 1.0) / 2.0;
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        const Sample s = locate(th, x, y, h, w);
        double dsx = 0.0, dsy = 0.0;
        for (std::size_t ch = 0; ch < c; ++ch) {
          const double gv = g.at(ch, y, x);
          if (gv == 0.0) continue;
          const double v00 = read(img, ch, s.x0, s.y0);
          const double v01 = read(img, ch, s.x0 + 1, s.y0);
          const double v10 = read(img, ch, s.x0, s.y0 + 1);
          const double v11 = read(img, ch, s.x0 + 1, s.y0 + 1);
          dsx += gv * ((1.0 - s.fy) * (v01 - v00) + s.fy * (v11 - v10));
          dsy += gv * ((1.0 - s.fx) * (v10 - v00) + s.fx * (v11 - v01));
          if (gin[0]) {
            add(*gin[0], ch, s.x0, s.y0, s.w00 * gv);
            add(*gin[0], ch, s.x0 + 1, s.y0, s.w01 * gv);
            add(*gin[0], ch, s.x0, s.y0 + 1, s.w10 * gv);
            add(*gin[0], ch, s.x0 + 1, s.y0 + 1, s.w11 * gv);
          }
        }
        if (gin[1]) {
          const double ux = static_cast<double>(x) - cx;
          const double uy = static_cast<double>(y) - cy;
          Tensor& gt = *gin[1];
          gt[0] += dsx * ux;
          gt[1] += dsx * uy;
          gt[2] += dsx;
          gt[3] += dsy * ux;
          gt[4] += dsy * uy;
          gt[5] += dsy;
        }
      }
    }
  }

  void signature(Inputs in, std::uint64_t& hash) const override {
    const Tensor& img = *in[0];
    const std::size_t h = img.dim(1), w = img.dim(2);
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        const Sample s = locate(*in[1], x, y, h, w);
        mix_hash(hash, static_cast<std::uint64_t>(s.x0 + 4096) * 8192 +
                           static_cast<std::uint64_t>(s.y0 + 4096));
      }
    }
  }

  /// Source coordinate of destination pixel (x, y).
  static std::array<double, 2> source_coord(const Tensor& th, std::size_t x,
                                            std::size_t y, std::size_t h,
                                            std::size_t w) {
    const double cx = (static_cast<double>(w) - 1.0) / 2.0;
    const double cy = (static_cast<double>(h) - 1.0) / 2.0;
    const double ux = static_cast<double>(x) - cx;
    const double uy = static_cast<double>(y) - cy;
    return {th[0] * ux + th[1] * uy + th[2] + cx,
            th[3] * ux + th[4] * uy + th[5] + cy};
  }

 private:
  struct Sample {
    long x0, y0;
    double fx, fy;
    double w00, w01, w10, w11;
  };

  static Sample locate(const Tensor& th, std::size_t x, std::size_t y,
                       std::size_t h, std::size_t w) {
    const auto [sx, sy] = source_coord(th, x, y, h, w);
    Sample s{};
    const double fx0 = std::floor(sx), fy0 = std::floor(sy);
    s.x0 = static_cast<long>(fx0);
    s.y0 = static_cast<long>(fy0);
    s.fx = sx - fx0;
    s.fy = sy - fy0;
    s.w00 = (1.0 - s.fx) * (1.0 - s.fy);
    s.w01 = s.fx * (1.0 - s.fy);
    s.w10 = (1.0 - s.fx) * s.fy;
    s.w11 = s.fx * s.fy;
    return s;
  }

  static double read(const Tensor& img, std::size_t ch, long x, long y) {
    if (x < 0 || y < 0 || x >= static_cast<long>(img.dim(2)) ||
        y >= static_cast<long>(img.dim(1))) {
      return 0.0;
    }
    return img.at(ch, static_cast<std::size_t>(y), static_cast<std::size_t>(x));
  }

  static void add(Tensor& img, std::size_t ch, long x, long y, double v) {
    if (x < 0 || y < 0 || x >= static_cast<long>(img.dim(2)) ||
        y >= static_cast<long>(img.dim(1))) {
      return;
    }
    img.at(ch, static_cast<std::size_t>(y), static_cast<std::size_t>(x)) += v;
  }
};

// ---------------------------------------------------------------------------
// Losses and reductions

/// Mean over non-ignored pixels of -log softmax(logits)[label].
class SoftmaxCrossEntropy final : public Op {
 public:
  SoftmaxCrossEntropy(std::vector<int> labels, std::optional<int> ignore)
      : labels_(std::move(labels)), ignore_(ignore) {}
  const char* name() const override { return "softmax_cross_entropy"; }

  Tensor forward(Inputs in) override {
    const Tensor& z = *in[0];
    const std::size_t k = z.dim(0), plane = z.dim(1) * z.dim(2);
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < plane; ++i) {
      if (ignored(i)) continue;
      double m = z[i];
      for (std::size_t c = 1; c < k; ++c) m = std::max(m, z[c * plane + i]);
      double s = 0.0;
      for (std::size_t c = 0; c < k; ++c) s += std::exp(z[c * plane + i] - m);
      total += std::log(s) + m - z[static_cast<std::size_t>(labels_[i]) * plane + i];
      ++count;
    }
    return Tensor::scalar(count ? total / static_cast<double>(count) : 0.0);
  }

  void backward(Inputs in, const Tensor&, const Tensor& g,
                GradInputs gin) override {
    if (!gin[0]) return;
    const Tensor& z = *in[0];
    const std::size_t k = z.dim(0), plane = z.dim(1) * z.dim(2);
    std::size_t count = 0;
    for (std::size_t i = 0; i < plane; ++i) count += ignored(i) ? 0 : 1;
    if (count == 0) return;
    const double scale = g[0] / static_cast<double>(count);
    std::vector<double> p(k);
    for (std::size_t i = 0; i < plane; ++i) {
      if (ignored(i)) continue;
      double m = z[i];
      for (std::size_t c = 1; c < k; ++c) m = std::max(m, z[c * plane + i]);
      double s = 0.0;
      for (std::size_t c = 0; c < k; ++c) {
        p[c] = std::exp(z[c * plane + i] - m);
        s += p[c];
      }
      for (std::size_t c = 0; c < k; ++c) {
        const double target = static_cast<int>(c) == labels_[i] ? 1.0 : 0.0;
        (*gin[0])[c * plane + i] += scale * (p[c] / s - target);
      }
    }
  }

 private:
  bool ignored(std::size_t i) const { return ignore_ && labels_[i] == *ignore_; }
  std::vector<int> labels_;
  std::optional<int> ignore_;
};

/// sum_i w_i x_i with constant weights (plain sum when weights are empty).
class WeightedSum final : public Op {
 public:
  explicit WeightedSum(Tensor weights = {}) : weights_(std::move(weights)) {}
  const char* name() const override { return "sum"; }
  Tensor forward(Inputs in) override {
    const Tensor& x = *in[0];
    double acc = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      acc += weights_.empty() ? x[i] : weights_[i] * x[i];
    }
    return Tensor::scalar(acc);
  }
  void backward(Inputs in, const Tensor&, const Tensor& g,
                GradInputs gin) override {
    if (!gin[0]) return;
    for (std::size_t i = 0; i < in[0]->size(); ++i) {
      (*gin[0])[i] += g[0] * (weights_.empty() ? 1.0 : weights_[i]);
    }
  }

 private:
  Tensor weights_;
};

}  // namespace ops

// ---------------------------------------------------------------------------
// Public functional API. Shape contracts are validated here so diagnostics
// name the operation the caller invoked.

inline Var conv2d(Var x, Var kernel) {
  const Tensor& xv = x.value();
  const Tensor& kv = kernel.value();
  require_rank(xv, 3, "conv2d");
  require_rank(kv, 4, "conv2d");
  if (kv.dim(2) != kv.dim(3) || kv.dim(2) < 1 || kv.dim(2) > 6) {
    throw Error("conv2d: kernel must be square with size 1..6, got " +
                shape_str(kv.shape()));
  }
  if (kv.dim(1) != xv.dim(0)) {
    throw Error("conv2d: kernel expects " + std::to_string(kv.dim(1)) +
                " input channels but input has " + std::to_string(xv.dim(0)) +
                " (input " + shape_str(xv.shape()) + ", kernel " +
                shape_str(kv.shape()) + ")");
  }
  if (xv.dim(1) < 1 || xv.dim(2) < 1) throw Error("conv2d: empty spatial extent");
  return x.tape().apply(std::make_unique<ops::Conv2d>(), {x, kernel});
}

inline Var add_channel_bias(Var x, Var bias) {
  require_rank(x.value(), 3, "add_channel_bias");
  if (bias.value().size() != x.value().dim(0)) {
    throw Error("add_channel_bias: bias has " +
                std::to_string(bias.value().size()) + " entries for " +
                std::to_string(x.value().dim(0)) + " channels");
  }
  return x.tape().apply(std::make_unique<ops::AddChannelBias>(), {x, bias});
}

inline Var relu(Var x) {
  auto fn = [](double v) { return v > 0.0 ? v : 0.0; };
  auto d = [](double v, double) { return v > 0.0 ? 1.0 : 0.0; };
  auto br = [](double v) { return v > 0.0 ? 1 : 0; };
  return x.tape().apply(
      std::make_unique<ops::PiecewiseUnary<decltype(fn), decltype(d), decltype(br)>>(
          "relu", fn, d, br),
      {x});
}

/// log2(relu(x) + 1); non-negative everywhere.
inline Var log2shift(Var x) {
  auto fn = [](double v) { return std::log2((v > 0.0 ? v : 0.0) + 1.0); };
  auto d = [](double v, double) {
    return v > 0.0 ? 1.0 / ((v + 1.0) * std::numbers::ln2) : 0.0;
  };
  auto br = [](double v) { return v > 0.0 ? 1 : 0; };
  return x.tape().apply(
      std::make_unique<ops::PiecewiseUnary<decltype(fn), decltype(d), decltype(br)>>(
          "log2shift", fn, d, br),
      {x});
}

inline Var sigmoid(Var x) {
  auto fn = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  auto d = [](double, double y) { return y * (1.0 - y); };
  return x.tape().apply(
      std::make_unique<ops::Unary<decltype(fn), decltype(d)>>("sigmoid", fn, d),
      {x});
}

inline Var tanh(Var x) {
  auto fn = [](double v) { return std::tanh(v); };
  auto d = [](double, double y) { return 1.0 - y * y; };
  return x.tape().apply(
      std::make_unique<ops::Unary<decltype(fn), decltype(d)>>("tanh", fn, d), {x});
}

/// Clamp to [0, 1]; the gradient passes on the closed interval.
inline Var clamp01(Var x) {
  auto fn = [](double v) { return std::clamp(v, 0.0, 1.0); };
  auto d = [](double v, double) { return v >= 0.0 && v <= 1.0 ? 1.0 : 0.0; };
  auto br = [](double v) { return v < 0.0 ? 0 : (v > 1.0 ? 2 : 1); };
  return x.tape().apply(
      std::make_unique<ops::PiecewiseUnary<decltype(fn), decltype(d), decltype(br)>>(
          "clamp01", fn, d, br),
      {x});
}

inline Var add(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "add");
  return a.tape().apply(std::make_unique<ops::Add>(), {a, b});
}

inline Var sub(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "sub");
  return a.tape().apply(std::make_unique<ops::Sub>(), {a, b});
}

inline Var mul(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "mul");
  return a.tape().apply(std::make_unique<ops::Mul>(), {a, b});
}

inline Var scale(Var x, double s) {
  return x.tape().apply(std::make_unique<ops::Scale>(s), {x});
}

inline Var mul_channel(Var x, Var w) {
  require_rank(x.value(), 3, "mul_channel");
  if (w.value().size() != x.value().dim(0)) {
    throw Error("mul_channel: " + std::to_string(w.value().size()) +
                " weights for " + std::to_string(x.value().dim(0)) + " channels");
  }
  return x.tape().apply(std::make_unique<ops::MulChannel>(), {x, w});
}

inline Var sub_broadcast(Var a, Var b) {
  require_rank(a.value(), 3, "sub_broadcast");
  require_rank(b.value(), 3, "sub_broadcast");
  if (b.value().dim(0) != 1 || b.value().dim(1) != a.value().dim(1) ||
      b.value().dim(2) != a.value().dim(2)) {
    throw Error("sub_broadcast: cannot broadcast " + shape_str(b.shape()) +
                " over " + shape_str(a.shape()));
  }
  return a.tape().apply(std::make_unique<ops::SubBroadcast>(), {a, b});
}

inline Var channel_mean(Var x) {
  require_rank(x.value(), 3, "channel_mean");
  if (x.value().dim(0) < 1) throw Error("channel_mean: no channels");
  return x.tape().apply(std::make_unique<ops::ChannelReduce>(true), {x});
}

inline Var channel_sum(Var x) {
  require_rank(x.value(), 3, "channel_sum");
  if (x.value().dim(0) < 1) throw Error("channel_sum: no channels");
  return x.tape().apply(std::make_unique<ops::ChannelReduce>(false), {x});
}

inline Var gap(Var x) {
  require_rank(x.value(), 3, "gap");
  if (x.value().dim(1) < 1 || x.value().dim(2) < 1) {
    throw Error("gap: empty spatial extent");
  }
  return x.tape().apply(std::make_unique<ops::Gap>(), {x});
}

inline Var dense(Var x, Var weights, Var bias) {
  const Tensor& w = weights.value();
  require_rank(w, 2, "dense");
  if (x.value().rank() != 1 || x.value().size() != w.dim(1)) {
    throw Error("dense: weights " + shape_str(w.shape()) +
                " cannot consume input " + shape_str(x.shape()));
  }
  if (bias.value().size() != w.dim(0)) {
    throw Error("dense: bias " + shape_str(bias.shape()) + " for " +
                std::to_string(w.dim(0)) + " outputs");
  }
  return x.tape().apply(std::make_unique<ops::Dense>(), {x, weights, bias});
}

inline Var concat(const std::vector<Var>& parts) {
  if (parts.empty()) throw Error("concat: no inputs");
  const Shape& first = parts.front().shape();
  for (const Var& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != first.size() || !std::equal(s.begin() + 1, s.end(), first.begin() + 1)) {
      throw Error("concat: incompatible shapes " + shape_str(first) + " and " +
                  shape_str(s));
    }
  }
  return parts.front().tape().apply(std::make_unique<ops::Concat>(), parts);
}

inline Var slice(Var x, std::size_t begin, std::size_t end) {
  if (begin >= end || end > x.value().dim(0)) {
    throw Error("slice: range [" + std::to_string(begin) + ", " +
                std::to_string(end) + ") outside " + shape_str(x.shape()));
  }
  return x.tape().apply(std::make_unique<ops::Slice>(begin, end), {x});
}

inline Var avg_pool2(Var x) {
  require_rank(x.value(), 3, "avg_pool2");
  if (x.value().dim(1) % 2 || x.value().dim(2) % 2) {
    throw Error("avg_pool2: odd spatial extent " + shape_str(x.shape()));
  }
  return x.tape().apply(std::make_unique<ops::AvgPool2>(), {x});
}

inline Var upsample_bilinear(Var x, std::size_t factor) {
  require_rank(x.value(), 3, "upsample_bilinear");
  if (factor < 1) throw Error("upsample_bilinear: factor must be >= 1");
  return x.tape().apply(std::make_unique<ops::UpsampleBilinear>(factor), {x});
}

inline Var affine_resample(Var image, Var theta) {
  require_rank(image.value(), 3, "affine_resample");
  if (theta.value().size() != 6) {
    throw Error("affine_resample: theta needs 6 entries, got " +
                shape_str(theta.shape()));
  }
  return image.tape().apply(std::make_unique<ops::AffineResample>(), {image, theta});
}

inline Var softmax_cross_entropy(Var logits, const std::vector<int>& labels,
                                 std::optional<int> ignore_index = std::nullopt) {
  const Tensor& z = logits.value();
  require_rank(z, 3, "softmax_cross_entropy");
  const std::size_t k = z.dim(0);
  if (labels.size() != z.dim(1) * z.dim(2)) {
    throw Error("softmax_cross_entropy: " + std::to_string(labels.size()) +
                " labels for logits " + shape_str(z.shape()));
  }
  std::size_t valid = 0;
  for (int l : labels) {
    if (ignore_index && l == *ignore_index) continue;
    if (l < 0 || static_cast<std::size_t>(l) >= k) {
      throw Error("softmax_cross_entropy: label " + std::to_string(l) +
                  " outside 0.." + std::to_string(k - 1));
    }
    ++valid;
  }
  if (valid == 0) throw Error("softmax_cross_entropy: every pixel is ignored");
  return logits.tape().apply(
      std::make_unique<ops::SoftmaxCrossEntropy>(labels, ignore_index), {logits});
}

inline Var sum(Var x) {
  return x.tape().apply(std::make_unique<ops::WeightedSum>(), {x});
}

inline Var weighted_sum(Var x, Tensor weights) {
  require_same_shape(x.value(), weights, "weighted_sum");
  return x.tape().apply(std::make_unique<ops::WeightedSum>(std::move(weights)), {x});
}

}  // namespace bifc
