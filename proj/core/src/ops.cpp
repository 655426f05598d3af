#include "ssit/ops.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "ssit/gemm.hpp"

namespace ssit {

namespace {

template <typename T>
using Node = detail::Node<T>;

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument(msg); }

template <typename T>
BasicGraph<T>& same_graph(std::initializer_list<const BasicTensor<T>*> ts) {
  BasicGraph<T>* g = nullptr;
  for (const auto* t : ts) {
    if (!t->defined()) fail("undefined tensor passed to op");
    if (!g) g = t->graph();
    else if (t->graph() != g) fail("op inputs belong to different graphs");
  }
  return *g;
}

// pads map out-of-range coordinates; -1 marks a zero-padding tap
int64_t map_coord(int64_t t, int64_t size, PadMode mode) {
  if (t >= 0 && t < size) return t;
  if (mode == PadMode::zero) return -1;
  if (size == 1) return 0;
  const int64_t period = 2 * size - 2;
  t = t < 0 ? -t : t;
  t %= period;
  return t < size ? t : period - t;
}

struct ConvDims {
  int64_t batch, cin, h, w;
  int64_t cout, kh, kw;
  int64_t oh, ow;
  int stride, padding;
  PadMode mode;
  int64_t patch() const { return cin * kh * kw; }
  int64_t opix() const { return oh * ow; }
};

// col[k][n] with k = (ci*KH + kh)*KW + kw and n = oy*OW + ox
template <typename T>
void gather_columns(const T* x, const ConvDims& d, const int64_t* ymap,
                    const int64_t* xmap, T* col) {
  const int64_t kk = d.kh * d.kw;
  parallel_for(0, d.patch(), [&](int64_t lo, int64_t hi) {
    for (int64_t k = lo; k < hi; ++k) {
      const int64_t ci = k / kk;
      const int64_t kr = (k % kk) / d.kw;
      const int64_t kc = k % d.kw;
      const T* plane = x + ci * d.h * d.w;
      T* row = col + k * d.opix();
      for (int64_t oy = 0; oy < d.oh; ++oy) {
        const int64_t sy = ymap[oy * d.kh + kr];
        T* out = row + oy * d.ow;
        if (sy < 0) {
          for (int64_t ox = 0; ox < d.ow; ++ox) out[ox] = T(0);
          continue;
        }
        const T* src = plane + sy * d.w;
        for (int64_t ox = 0; ox < d.ow; ++ox) {
          const int64_t sx = xmap[ox * d.kw + kc];
          out[ox] = sx < 0 ? T(0) : src[sx];
        }
      }
    }
  });
}

// colT[n][k]; used for the weight-gradient GEMM
template <typename T>
void gather_columns_t(const T* x, const ConvDims& d, const int64_t* ymap,
                      const int64_t* xmap, T* colt) {
  const int64_t kk = d.kh * d.kw;
  const int64_t patch = d.patch();
  parallel_for(0, d.opix(), [&](int64_t lo, int64_t hi) {
    for (int64_t n = lo; n < hi; ++n) {
      const int64_t oy = n / d.ow;
      const int64_t ox = n % d.ow;
      T* row = colt + n * patch;
      for (int64_t k = 0; k < patch; ++k) {
        const int64_t ci = k / kk;
        const int64_t kr = (k % kk) / d.kw;
        const int64_t kc = k % d.kw;
        const int64_t sy = ymap[oy * d.kh + kr];
        const int64_t sx = xmap[ox * d.kw + kc];
        row[k] = (sy < 0 || sx < 0) ? T(0) : x[(ci * d.h + sy) * d.w + sx];
      }
    }
  });
}

// scatter-add of the column gradient back onto the (unpadded) input plane;
// parallel per channel, fixed order within a channel
template <typename T>
void scatter_columns(const T* dcol, const ConvDims& d, const int64_t* ymap,
                     const int64_t* xmap, T* dx) {
  const int64_t kk = d.kh * d.kw;
  parallel_for(0, d.cin, [&](int64_t clo, int64_t chi) {
    for (int64_t ci = clo; ci < chi; ++ci) {
      T* plane = dx + ci * d.h * d.w;
      for (int64_t r = 0; r < kk; ++r) {
        const int64_t kr = r / d.kw;
        const int64_t kc = r % d.kw;
        const T* row = dcol + (ci * kk + r) * d.opix();
        for (int64_t oy = 0; oy < d.oh; ++oy) {
          const int64_t sy = ymap[oy * d.kh + kr];
          if (sy < 0) continue;
          const T* src = row + oy * d.ow;
          T* dst = plane + sy * d.w;
          for (int64_t ox = 0; ox < d.ow; ++ox) {
            const int64_t sx = xmap[ox * d.kw + kc];
            if (sx >= 0) dst[sx] += src[ox];
          }
        }
      }
    }
  });
}

std::vector<int64_t> build_map(int64_t out_extent, int64_t kernel, int64_t size,
                               int stride, int padding, PadMode mode) {
  std::vector<int64_t> m(out_extent * kernel);
  for (int64_t o = 0; o < out_extent; ++o)
    for (int64_t k = 0; k < kernel; ++k)
      m[o * kernel + k] = map_coord(o * stride - padding + k, size, mode);
  return m;
}

}  // namespace

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                      const BasicTensor<T>& bias, int stride, int padding,
                      PadMode pad_mode) {
  auto& g = same_graph<T>({&input, &weight, &bias});
  const Shape& xs = input.shape();
  const Shape& ws = weight.shape();
  if (xs.size() != 4) fail("conv2d: input must be batch x channels x H x W, got " + shape_str(xs));
  if (ws.size() != 4) fail("conv2d: weight must be out x in x KH x KW, got " + shape_str(ws));
  ConvDims d;
  d.batch = xs[0]; d.cin = xs[1]; d.h = xs[2]; d.w = xs[3];
  d.cout = ws[0]; d.kh = ws[2]; d.kw = ws[3];
  d.stride = stride; d.padding = padding; d.mode = pad_mode;
  if (ws[1] != d.cin)
    fail("conv2d: input has " + std::to_string(d.cin) + " channels but weight expects " +
         std::to_string(ws[1]));
  if (bias.shape().size() != 1 || bias.shape()[0] != d.cout)
    fail("conv2d: bias must have one value per output channel (" +
         std::to_string(d.cout) + "), got " + shape_str(bias.shape()));
  if (stride < 1) fail("conv2d: stride must be >= 1");
  if (padding < 0) fail("conv2d: padding must be >= 0");
  if (pad_mode == PadMode::reflect && (padding > d.h - 1 || padding > d.w - 1))
    fail("conv2d: reflect padding " + std::to_string(padding) +
         " too large for input " + shape_str(xs));
  d.oh = (d.h + 2 * padding - d.kh) / stride + 1;
  d.ow = (d.w + 2 * padding - d.kw) / stride + 1;
  if (d.h + 2 * padding < d.kh || d.w + 2 * padding < d.kw || d.oh < 1 || d.ow < 1)
    fail("conv2d: kernel " + shape_str(ws) + " does not fit input " + shape_str(xs) +
         " with padding " + std::to_string(padding));

  const auto ymap = build_map(d.oh, d.kh, d.h, stride, padding, pad_mode);
  const auto xmap = build_map(d.ow, d.kw, d.w, stride, padding, pad_mode);

  const int64_t patch = d.patch(), opix = d.opix();
  std::vector<T> out(d.batch * d.cout * opix);
  {
    std::vector<T> col(patch * opix);
    const T* xv = input.values().data();
    const T* wv = weight.values().data();
    const T* bv = bias.values().data();
    for (int64_t b = 0; b < d.batch; ++b) {
      gather_columns(xv + b * d.cin * d.h * d.w, d, ymap.data(), xmap.data(), col.data());
      T* ob = out.data() + b * d.cout * opix;
      for (int64_t co = 0; co < d.cout; ++co)
        for (int64_t n = 0; n < opix; ++n) ob[co * opix + n] = bv[co];
      gemm_accumulate(wv, col.data(), ob, d.cout, opix, patch);
    }
  }

  return g.make_node(
      {d.batch, d.cout, d.oh, d.ow}, std::move(out), {input, weight, bias},
      [d, ymap, xmap](Node<T>& self) {
        auto& xin = *self.inputs[0];
        auto& win = *self.inputs[1];
        auto& bin = *self.inputs[2];
        const T* gy = self.grad->data();
        const int64_t patch = d.patch(), opix = d.opix();

        if (bin.requires_grad) {
          auto& gb = bin.grad_buffer();
          for (int64_t b = 0; b < d.batch; ++b)
            for (int64_t co = 0; co < d.cout; ++co) {
              const T* row = gy + (b * d.cout + co) * opix;
              T s = 0;
              for (int64_t n = 0; n < opix; ++n) s += row[n];
              gb[co] += s;
            }
        }
        if (win.requires_grad) {
          auto& gw = win.grad_buffer();
          std::vector<T> colt(opix * patch);
          for (int64_t b = 0; b < d.batch; ++b) {
            gather_columns_t(xin.value->data() + b * d.cin * d.h * d.w, d,
                             ymap.data(), xmap.data(), colt.data());
            gemm_accumulate(gy + b * d.cout * opix, colt.data(), gw.data(),
                            d.cout, patch, opix);
          }
        }
        if (xin.requires_grad) {
          auto& gx = xin.grad_buffer();
          const T* wv = win.value->data();
          std::vector<T> wt(patch * d.cout);
          for (int64_t co = 0; co < d.cout; ++co)
            for (int64_t k = 0; k < patch; ++k) wt[k * d.cout + co] = wv[co * patch + k];
          std::vector<T> dcol(patch * opix);
          for (int64_t b = 0; b < d.batch; ++b) {
            std::fill(dcol.begin(), dcol.end(), T(0));
            gemm_accumulate(wt.data(), gy + b * d.cout * opix, dcol.data(),
                            patch, opix, d.cout);
            scatter_columns(dcol.data(), d, ymap.data(), xmap.data(),
                            gx.data() + b * d.cin * d.h * d.w);
          }
        }
      });
}

// ---------------------------------------------------------------------------
// pointwise activations
// ---------------------------------------------------------------------------

template <typename T>
BasicTensor<T> leaky_relu(const BasicTensor<T>& x, T slope) {
  auto& g = same_graph<T>({&x});
  std::vector<T> out(x.values().begin(), x.values().end());
  for (T& v : out)
    if (v < T(0)) v *= slope;
  return g.make_node(x.shape(), std::move(out), {x}, [slope](Node<T>& self) {
    auto& xin = *self.inputs[0];
    if (!xin.requires_grad) return;
    auto& gx = xin.grad_buffer();
    const auto& gy = *self.grad;
    const auto& xv = *xin.value;
    for (size_t i = 0; i < gx.size(); ++i) {
      // subgradient at the kink is defined as 0
      if (xv[i] > T(0)) gx[i] += gy[i];
      else if (xv[i] < T(0)) gx[i] += slope * gy[i];
    }
  });
}

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& x) {
  return leaky_relu(x, T(0));
}

template <typename T>
BasicTensor<T> tanh_act(const BasicTensor<T>& x) {
  auto& g = same_graph<T>({&x});
  std::vector<T> out(x.numel());
  auto xv = x.values();
  for (int64_t i = 0; i < x.numel(); ++i) out[i] = std::tanh(xv[i]);
  return g.make_node(x.shape(), std::move(out), {x}, [](Node<T>& self) {
    auto& xin = *self.inputs[0];
    if (!xin.requires_grad) return;
    auto& gx = xin.grad_buffer();
    const auto& gy = *self.grad;
    const auto& yv = *self.value;
    for (size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i] * (T(1) - yv[i] * yv[i]);
  });
}

template <typename T>
BasicTensor<T> sigmoid(const BasicTensor<T>& x) {
  auto& g = same_graph<T>({&x});
  std::vector<T> out(x.numel());
  auto xv = x.values();
  for (int64_t i = 0; i < x.numel(); ++i) out[i] = T(1) / (T(1) + std::exp(-xv[i]));
  return g.make_node(x.shape(), std::move(out), {x}, [](Node<T>& self) {
    auto& xin = *self.inputs[0];
    if (!xin.requires_grad) return;
    auto& gx = xin.grad_buffer();
    const auto& gy = *self.grad;
    const auto& yv = *self.value;
    for (size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i] * yv[i] * (T(1) - yv[i]);
  });
}

// ---------------------------------------------------------------------------
// normalization
// ---------------------------------------------------------------------------

namespace {

constexpr double kNormEps = 1e-5;

template <typename T>
BasicTensor<T> channel_norm(const char* opname, const BasicTensor<T>& x,
                            const BasicTensor<T>& gamma, const BasicTensor<T>& beta) {
  auto& g = same_graph<T>({&x, &gamma, &beta});
  const Shape& xs = x.shape();
  if (xs.size() != 4) fail(std::string(opname) + ": input must be 4-D, got " + shape_str(xs));
  const int64_t B = xs[0], C = xs[1], m = xs[2] * xs[3];
  if (m == 1)
    fail(std::string(opname) + ": spatial extent 1x1 leaves the variance undefined");
  if (gamma.numel() != C || beta.numel() != C)
    fail(std::string(opname) + ": expected " + std::to_string(C) +
         " scale/shift parameters, got " + std::to_string(gamma.numel()) + "/" +
         std::to_string(beta.numel()));

  auto xv = x.values();
  auto gv = gamma.values();
  auto bv = beta.values();
  std::vector<T> out(x.numel());
  auto stats = std::make_shared<std::vector<T>>(2 * B * C);  // mean, inv_std
  for (int64_t bc = 0; bc < B * C; ++bc) {
    const T* p = xv.data() + bc * m;
    T mean = 0;
    for (int64_t i = 0; i < m; ++i) mean += p[i];
    mean /= static_cast<T>(m);
    T var = 0;
    for (int64_t i = 0; i < m; ++i) {
      const T dlt = p[i] - mean;
      var += dlt * dlt;
    }
    var /= static_cast<T>(m);
    const T inv = T(1) / std::sqrt(var + static_cast<T>(kNormEps));
    (*stats)[2 * bc] = mean;
    (*stats)[2 * bc + 1] = inv;
    const int64_t c = bc % C;
    T* o = out.data() + bc * m;
    for (int64_t i = 0; i < m; ++i) o[i] = gv[c] * ((p[i] - mean) * inv) + bv[c];
  }

  return g.make_node(xs, std::move(out), {x, gamma, beta},
                     [B, C, m, stats](Node<T>& self) {
    auto& xin = *self.inputs[0];
    auto& gin = *self.inputs[1];
    auto& bin = *self.inputs[2];
    const auto& gy = *self.grad;
    const auto& xv = *xin.value;
    const auto& gv = *gin.value;
    for (int64_t bc = 0; bc < B * C; ++bc) {
      const int64_t c = bc % C;
      const T mean = (*stats)[2 * bc];
      const T inv = (*stats)[2 * bc + 1];
      const T* p = xv.data() + bc * m;
      const T* dy = gy.data() + bc * m;
      T sum_dy = 0, sum_dyy = 0;
      for (int64_t i = 0; i < m; ++i) {
        const T y = (p[i] - mean) * inv;
        sum_dy += dy[i];
        sum_dyy += dy[i] * y;
      }
      if (bin.requires_grad) bin.grad_buffer()[c] += sum_dy;
      if (gin.requires_grad) gin.grad_buffer()[c] += sum_dyy;
      if (xin.requires_grad) {
        T* gx = xin.grad_buffer().data() + bc * m;
        const T k1 = sum_dy / static_cast<T>(m);
        const T k2 = sum_dyy / static_cast<T>(m);
        const T scale = gv[c] * inv;
        for (int64_t i = 0; i < m; ++i) {
          const T y = (p[i] - mean) * inv;
          gx[i] += scale * (dy[i] - k1 - y * k2);
        }
      }
    }
  });
}

}  // namespace

template <typename T>
BasicTensor<T> instance_norm(const BasicTensor<T>& x, const BasicTensor<T>& gamma,
                             const BasicTensor<T>& beta) {
  return channel_norm("instance_norm", x, gamma, beta);
}

template <typename T>
BasicTensor<T> adain(const BasicTensor<T>& content_feat, const BasicTensor<T>& gamma,
                     const BasicTensor<T>& beta) {
  return channel_norm("adain", content_feat, gamma, beta);
}

// ---------------------------------------------------------------------------
// pooling / resampling
// ---------------------------------------------------------------------------

template <typename T>
BasicTensor<T> global_avg_pool(const BasicTensor<T>& x) {
  auto& g = same_graph<T>({&x});
  const Shape& xs = x.shape();
  if (xs.size() != 4) fail("global_avg_pool: input must be 4-D, got " + shape_str(xs));
  const int64_t B = xs[0], C = xs[1], m = xs[2] * xs[3];
  std::vector<T> out(B * C);
  auto xv = x.values();
  for (int64_t bc = 0; bc < B * C; ++bc) {
    T s = 0;
    const T* p = xv.data() + bc * m;
    for (int64_t i = 0; i < m; ++i) s += p[i];
    out[bc] = s / static_cast<T>(m);
  }
  return g.make_node({B, C, 1, 1}, std::move(out), {x}, [B, C, m](Node<T>& self) {
    auto& xin = *self.inputs[0];
    if (!xin.requires_grad) return;
    auto& gx = xin.grad_buffer();
    const auto& gy = *self.grad;
    for (int64_t bc = 0; bc < B * C; ++bc) {
      const T gshare = gy[bc] / static_cast<T>(m);
      T* p = gx.data() + bc * m;
      for (int64_t i = 0; i < m; ++i) p[i] += gshare;
    }
  });
}

template <typename T>
BasicTensor<T> avg_pool_halve(const BasicTensor<T>& x) {
  auto& g = same_graph<T>({&x});
  const Shape& xs = x.shape();
  if (xs.size() != 4) fail("avg_pool_halve: input must be 4-D, got " + shape_str(xs));
  const int64_t B = xs[0], C = xs[1], H = xs[2], W = xs[3];
  const int64_t OH = (H - 1) / 2 + 1, OW = (W - 1) / 2 + 1;
  std::vector<T> out(B * C * OH * OW);
  auto xv = x.values();
  for (int64_t bc = 0; bc < B * C; ++bc) {
    const T* p = xv.data() + bc * H * W;
    T* o = out.data() + bc * OH * OW;
    for (int64_t oy = 0; oy < OH; ++oy)
      for (int64_t ox = 0; ox < OW; ++ox) {
        T s = 0;
        int cnt = 0;
        for (int64_t dy = -1; dy <= 1; ++dy)
          for (int64_t dx = -1; dx <= 1; ++dx) {
            const int64_t y = oy * 2 + dy, xq = ox * 2 + dx;
            if (y < 0 || y >= H || xq < 0 || xq >= W) continue;
            s += p[y * W + xq];
            ++cnt;
          }
        o[oy * OW + ox] = s / static_cast<T>(cnt);
      }
  }
  return g.make_node({B, C, OH, OW}, std::move(out), {x},
                     [B, C, H, W, OH, OW](Node<T>& self) {
    auto& xin = *self.inputs[0];
    if (!xin.requires_grad) return;
    auto& gx = xin.grad_buffer();
    const auto& gy = *self.grad;
    for (int64_t bc = 0; bc < B * C; ++bc) {
      T* p = gx.data() + bc * H * W;
      const T* o = gy.data() + bc * OH * OW;
      for (int64_t oy = 0; oy < OH; ++oy)
        for (int64_t ox = 0; ox < OW; ++ox) {
          int cnt = 0;
          for (int64_t dy = -1; dy <= 1; ++dy)
            for (int64_t dx = -1; dx <= 1; ++dx) {
              const int64_t y = oy * 2 + dy, xq = ox * 2 + dx;
              if (y >= 0 && y < H && xq >= 0 && xq < W) ++cnt;
            }
          const T share = o[oy * OW + ox] / static_cast<T>(cnt);
          for (int64_t dy = -1; dy <= 1; ++dy)
            for (int64_t dx = -1; dx <= 1; ++dx) {
              const int64_t y = oy * 2 + dy, xq = ox * 2 + dx;
              if (y >= 0 && y < H && xq >= 0 && xq < W) p[y * W + xq] += share;
            }
        }
    }
  });
}

template <typename T>
BasicTensor<T> upsample_nearest(const BasicTensor<T>& x, int factor) {
  auto& g = same_graph<T>({&x});
  if (factor < 2) fail("upsample_nearest: factor must be >= 2");
  const Shape& xs = x.shape();
  if (xs.size() != 4) fail("upsample_nearest: input must be 4-D, got " + shape_str(xs));
  const int64_t B = xs[0], C = xs[1], H = xs[2], W = xs[3], f = factor;
  std::vector<T> out(B * C * H * f * W * f);
  auto xv = x.values();
  for (int64_t bc = 0; bc < B * C; ++bc) {
    const T* p = xv.data() + bc * H * W;
    T* o = out.data() + bc * H * f * W * f;
    for (int64_t y = 0; y < H * f; ++y) {
      const T* row = p + (y / f) * W;
      T* orow = o + y * W * f;
      for (int64_t xq = 0; xq < W * f; ++xq) orow[xq] = row[xq / f];
    }
  }
  return g.make_node({B, C, H * f, W * f}, std::move(out), {x},
                     [B, C, H, W, f](Node<T>& self) {
    auto& xin = *self.inputs[0];
    if (!xin.requires_grad) return;
    auto& gx = xin.grad_buffer();
    const auto& gy = *self.grad;
    for (int64_t bc = 0; bc < B * C; ++bc) {
      T* p = gx.data() + bc * H * W;
      const T* o = gy.data() + bc * H * f * W * f;
      for (int64_t y = 0; y < H * f; ++y) {
        const T* orow = o + y * W * f;
        T* prow = p + (y / f) * W;
        for (int64_t xq = 0; xq < W * f; ++xq) prow[xq / f] += orow[xq];
      }
    }
  });
}

// ---------------------------------------------------------------------------
// linear
// ---------------------------------------------------------------------------

template <typename T>
BasicTensor<T> fully_connected(const BasicTensor<T>& x, const BasicTensor<T>& weight,
                               const BasicTensor<T>& bias) {
  auto& g = same_graph<T>({&x, &weight, &bias});
  const Shape& xs = x.shape();
  const Shape& ws = weight.shape();
  if (xs.size() != 2) fail("fully_connected: input must be batch x features, got " + shape_str(xs));
  if (ws.size() != 2) fail("fully_connected: weight must be out x in, got " + shape_str(ws));
  const int64_t B = xs[0], F = xs[1], O = ws[0];
  if (ws[1] != F)
    fail("fully_connected: input has " + std::to_string(F) +
         " features but weight expects " + std::to_string(ws[1]));
  if (bias.numel() != O)
    fail("fully_connected: bias length " + std::to_string(bias.numel()) +
         " does not match " + std::to_string(O) + " outputs");
  std::vector<T> out(B * O);
  auto xv = x.values();
  auto wv = weight.values();
  auto bv = bias.values();
  for (int64_t b = 0; b < B; ++b)
    for (int64_t o = 0; o < O; ++o) {
      T acc = bv[o];
      const T* xr = xv.data() + b * F;
      const T* wr = wv.data() + o * F;
      for (int64_t f = 0; f < F; ++f) acc = std::fma(xr[f], wr[f], acc);
      out[b * O + o] = acc;
    }
  return g.make_node({B, O}, std::move(out), {x, weight, bias},
                     [B, F, O](Node<T>& self) {
    auto& xin = *self.inputs[0];
    auto& win = *self.inputs[1];
    auto& bin = *self.inputs[2];
    const auto& gy = *self.grad;
    if (bin.requires_grad) {
      auto& gb = bin.grad_buffer();
      for (int64_t b = 0; b < B; ++b)
        for (int64_t o = 0; o < O; ++o) gb[o] += gy[b * O + o];
    }
    if (win.requires_grad) {
      auto& gw = win.grad_buffer();
      const auto& xv = *xin.value;
      for (int64_t b = 0; b < B; ++b)
        for (int64_t o = 0; o < O; ++o) {
          const T gyv = gy[b * O + o];
          const T* xr = xv.data() + b * F;
          T* wr = gw.data() + o * F;
          for (int64_t f = 0; f < F; ++f) wr[f] += gyv * xr[f];
        }
    }
    if (xin.requires_grad) {
      auto& gx = xin.grad_buffer();
      const auto& wv = *win.value;
      for (int64_t b = 0; b < B; ++b)
        for (int64_t o = 0; o < O; ++o) {
          const T gyv = gy[b * O + o];
          const T* wr = wv.data() + o * F;
          T* xr = gx.data() + b * F;
          for (int64_t f = 0; f < F; ++f) xr[f] += gyv * wr[f];
        }
    }
  });
}

// ---------------------------------------------------------------------------
// elementwise arithmetic
// ---------------------------------------------------------------------------

namespace {

template <typename T>
void check_same_shape(const char* op, const BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (a.shape() != b.shape())
    fail(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
         shape_str(b.shape()));
}

}  // namespace

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  auto& g = same_graph<T>({&a, &b});
  check_same_shape("add", a, b);
  std::vector<T> out(a.numel());
  auto av = a.values(), bv = b.values();
  for (int64_t i = 0; i < a.numel(); ++i) out[i] = av[i] + bv[i];
  return g.make_node(a.shape(), std::move(out), {a, b}, [](Node<T>& self) {
    const auto& gy = *self.grad;
    for (int s = 0; s < 2; ++s) {
      auto& in = *self.inputs[s];
      if (!in.requires_grad) continue;
      auto& gi = in.grad_buffer();
      for (size_t i = 0; i < gi.size(); ++i) gi[i] += gy[i];
    }
  });
}

template <typename T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  auto& g = same_graph<T>({&a, &b});
  check_same_shape("sub", a, b);
  std::vector<T> out(a.numel());
  auto av = a.values(), bv = b.values();
  for (int64_t i = 0; i < a.numel(); ++i) out[i] = av[i] - bv[i];
  return g.make_node(a.shape(), std::move(out), {a, b}, [](Node<T>& self) {
    const auto& gy = *self.grad;
    auto& ain = *self.inputs[0];
    auto& bin = *self.inputs[1];
    if (ain.requires_grad) {
      auto& gi = ain.grad_buffer();
      for (size_t i = 0; i < gi.size(); ++i) gi[i] += gy[i];
    }
    if (bin.requires_grad) {
      auto& gi = bin.grad_buffer();
      for (size_t i = 0; i < gi.size(); ++i) gi[i] -= gy[i];
    }
  });
}

template <typename T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  auto& g = same_graph<T>({&a, &b});
  check_same_shape("mul", a, b);
  std::vector<T> out(a.numel());
  auto av = a.values(), bv = b.values();
  for (int64_t i = 0; i < a.numel(); ++i) out[i] = av[i] * bv[i];
  return g.make_node(a.shape(), std::move(out), {a, b}, [](Node<T>& self) {
    const auto& gy = *self.grad;
    auto& ain = *self.inputs[0];
    auto& bin = *self.inputs[1];
    if (ain.requires_grad) {
      auto& gi = ain.grad_buffer();
      const auto& bv = *bin.value;
      for (size_t i = 0; i < gi.size(); ++i) gi[i] += gy[i] * bv[i];
    }
    if (bin.requires_grad) {
      auto& gi = bin.grad_buffer();
      const auto& av = *ain.value;
      for (size_t i = 0; i < gi.size(); ++i) gi[i] += gy[i] * av[i];
    }
  });
}

template <typename T>
BasicTensor<T> affine_map(const BasicTensor<T>& x, T a, T b) {
  auto& g = same_graph<T>({&x});
  std::vector<T> out(x.numel());
  auto xv = x.values();
  for (int64_t i = 0; i < x.numel(); ++i) out[i] = a * xv[i] + b;
  return g.make_node(x.shape(), std::move(out), {x}, [a](Node<T>& self) {
    auto& xin = *self.inputs[0];
    if (!xin.requires_grad) return;
    auto& gx = xin.grad_buffer();
    const auto& gy = *self.grad;
    for (size_t i = 0; i < gx.size(); ++i) gx[i] += a * gy[i];
  });
}

template <typename T>
BasicTensor<T> square(const BasicTensor<T>& x) {
  auto& g = same_graph<T>({&x});
  std::vector<T> out(x.numel());
  auto xv = x.values();
  for (int64_t i = 0; i < x.numel(); ++i) out[i] = xv[i] * xv[i];
  return g.make_node(x.shape(), std::move(out), {x}, [](Node<T>& self) {
    auto& xin = *self.inputs[0];
    if (!xin.requires_grad) return;
    auto& gx = xin.grad_buffer();
    const auto& gy = *self.grad;
    const auto& xv = *xin.value;
    for (size_t i = 0; i < gx.size(); ++i) gx[i] += T(2) * xv[i] * gy[i];
  });
}

template <typename T>
BasicTensor<T> clamp(const BasicTensor<T>& x, T lo, T hi) {
  auto& g = same_graph<T>({&x});
  std::vector<T> out(x.numel());
  auto xv = x.values();
  for (int64_t i = 0; i < x.numel(); ++i) out[i] = std::min(std::max(xv[i], lo), hi);
  return g.make_node(x.shape(), std::move(out), {x}, [lo, hi](Node<T>& self) {
    auto& xin = *self.inputs[0];
    if (!xin.requires_grad) return;
    auto& gx = xin.grad_buffer();
    const auto& gy = *self.grad;
    const auto& xv = *xin.value;
    for (size_t i = 0; i < gx.size(); ++i)
      if (xv[i] >= lo && xv[i] <= hi) gx[i] += gy[i];
  });
}

template <typename T>
BasicTensor<T> log_nat(const BasicTensor<T>& x) {
  auto& g = same_graph<T>({&x});
  std::vector<T> out(x.numel());
  auto xv = x.values();
  for (int64_t i = 0; i < x.numel(); ++i) out[i] = std::log(xv[i]);
  return g.make_node(x.shape(), std::move(out), {x}, [](Node<T>& self) {
    auto& xin = *self.inputs[0];
    if (!xin.requires_grad) return;
    auto& gx = xin.grad_buffer();
    const auto& gy = *self.grad;
    const auto& xv = *xin.value;
    for (size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i] / xv[i];
  });
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

template <typename T>
BasicTensor<T> sum_all(const BasicTensor<T>& x) {
  auto& g = same_graph<T>({&x});
  auto xv = x.values();
  T s = 0;
  for (int64_t i = 0; i < x.numel(); ++i) s += xv[i];
  return g.make_node({1}, {s}, {x}, [](Node<T>& self) {
    auto& xin = *self.inputs[0];
    if (!xin.requires_grad) return;
    auto& gx = xin.grad_buffer();
    const T gy = (*self.grad)[0];
    for (size_t i = 0; i < gx.size(); ++i) gx[i] += gy;
  });
}

template <typename T>
BasicTensor<T> mean_all(const BasicTensor<T>& x) {
  auto& g = same_graph<T>({&x});
  auto xv = x.values();
  T s = 0;
  for (int64_t i = 0; i < x.numel(); ++i) s += xv[i];
  const int64_t n = x.numel();
  s /= static_cast<T>(n);
  return g.make_node({1}, {s}, {x}, [n](Node<T>& self) {
    auto& xin = *self.inputs[0];
    if (!xin.requires_grad) return;
    auto& gx = xin.grad_buffer();
    const T gy = (*self.grad)[0] / static_cast<T>(n);
    for (size_t i = 0; i < gx.size(); ++i) gx[i] += gy;
  });
}

template <typename T>
BasicTensor<T> l1_distance(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  auto& g = same_graph<T>({&a, &b});
  check_same_shape("l1_distance", a, b);
  auto av = a.values(), bv = b.values();
  const int64_t n = a.numel();
  T s = 0;
  for (int64_t i = 0; i < n; ++i) s += std::abs(av[i] - bv[i]);
  s /= static_cast<T>(n);
  return g.make_node({1}, {s}, {a, b}, [n](Node<T>& self) {
    auto& ain = *self.inputs[0];
    auto& bin = *self.inputs[1];
    const T gy = (*self.grad)[0] / static_cast<T>(n);
    const auto& av = *ain.value;
    const auto& bv = *bin.value;
    for (int64_t i = 0; i < n; ++i) {
      const T dlt = av[i] - bv[i];
      const T s = dlt > T(0) ? gy : (dlt < T(0) ? -gy : T(0));
      if (ain.requires_grad) ain.grad_buffer()[i] += s;
      if (bin.requires_grad) bin.grad_buffer()[i] -= s;
    }
  });
}

// ---------------------------------------------------------------------------
// shape plumbing
// ---------------------------------------------------------------------------

template <typename T>
BasicTensor<T> reshape(const BasicTensor<T>& x, Shape shape) {
  auto& g = same_graph<T>({&x});
  if (shape_numel(shape) != x.numel())
    fail("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  std::vector<T> out(x.values().begin(), x.values().end());
  return g.make_node(std::move(shape), std::move(out), {x}, [](Node<T>& self) {
    auto& xin = *self.inputs[0];
    if (!xin.requires_grad) return;
    auto& gx = xin.grad_buffer();
    const auto& gy = *self.grad;
    for (size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i];
  });
}

template <typename T>
BasicTensor<T> slice_vec(const BasicTensor<T>& x, int64_t begin, int64_t end) {
  auto& g = same_graph<T>({&x});
  const int64_t n = x.numel();
  if (begin < 0 || end > n || begin >= end)
    fail("slice_vec: range [" + std::to_string(begin) + ", " + std::to_string(end) +
         ") out of bounds for " + std::to_string(n) + " elements");
  auto xv = x.values();
  std::vector<T> out(xv.begin() + begin, xv.begin() + end);
  return g.make_node({1, end - begin}, std::move(out), {x}, [begin](Node<T>& self) {
    auto& xin = *self.inputs[0];
    if (!xin.requires_grad) return;
    auto& gx = xin.grad_buffer();
    const auto& gy = *self.grad;
    for (size_t i = 0; i < gy.size(); ++i) gx[begin + i] += gy[i];
  });
}

// ---------------------------------------------------------------------------
// explicit instantiations
// ---------------------------------------------------------------------------

#define SSIT_INSTANTIATE_OPS(T)                                                          \
  template BasicTensor<T> conv2d<T>(const BasicTensor<T>&, const BasicTensor<T>&,        \
                                    const BasicTensor<T>&, int, int, PadMode);           \
  template BasicTensor<T> relu<T>(const BasicTensor<T>&);                                \
  template BasicTensor<T> leaky_relu<T>(const BasicTensor<T>&, T);                       \
  template BasicTensor<T> tanh_act<T>(const BasicTensor<T>&);                            \
  template BasicTensor<T> sigmoid<T>(const BasicTensor<T>&);                             \
  template BasicTensor<T> instance_norm<T>(const BasicTensor<T>&, const BasicTensor<T>&, \
                                           const BasicTensor<T>&);                       \
  template BasicTensor<T> adain<T>(const BasicTensor<T>&, const BasicTensor<T>&,         \
                                   const BasicTensor<T>&);                               \
  template BasicTensor<T> global_avg_pool<T>(const BasicTensor<T>&);                     \
  template BasicTensor<T> avg_pool_halve<T>(const BasicTensor<T>&);                      \
  template BasicTensor<T> fully_connected<T>(const BasicTensor<T>&,                      \
                                             const BasicTensor<T>&,                      \
                                             const BasicTensor<T>&);                     \
  template BasicTensor<T> upsample_nearest<T>(const BasicTensor<T>&, int);               \
  template BasicTensor<T> add<T>(const BasicTensor<T>&, const BasicTensor<T>&);          \
  template BasicTensor<T> sub<T>(const BasicTensor<T>&, const BasicTensor<T>&);          \
  template BasicTensor<T> mul<T>(const BasicTensor<T>&, const BasicTensor<T>&);          \
  template BasicTensor<T> affine_map<T>(const BasicTensor<T>&, T, T);                    \
  template BasicTensor<T> square<T>(const BasicTensor<T>&);                              \
  template BasicTensor<T> clamp<T>(const BasicTensor<T>&, T, T);                         \
  template BasicTensor<T> log_nat<T>(const BasicTensor<T>&);                             \
  template BasicTensor<T> mean_all<T>(const BasicTensor<T>&);                            \
  template BasicTensor<T> sum_all<T>(const BasicTensor<T>&);                             \
  template BasicTensor<T> l1_distance<T>(const BasicTensor<T>&, const BasicTensor<T>&);  \
  template BasicTensor<T> reshape<T>(const BasicTensor<T>&, Shape);                      \
  template BasicTensor<T> slice_vec<T>(const BasicTensor<T>&, int64_t, int64_t);

SSIT_INSTANTIATE_OPS(float)
SSIT_INSTANTIATE_OPS(double)

}  // namespace ssit
