#include "ssit/matting.hpp"

#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>

namespace ssit {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument(msg); }

struct ImageView {
  int64_t h = 0, w = 0;
  std::vector<double> rgb;  // 3 planes, row-major

  double at(int c, int64_t y, int64_t x) const { return rgb[(c * h + y) * w + x]; }
};

template <typename T>
ImageView to_image01(const BasicTensor<T>& t, bool check_range) {
  Shape s = t.shape();
  if (s.size() == 4 && s[0] == 1) s.erase(s.begin());
  if (s.size() != 3 || s[0] != 3)
    fail("matting: expected a 3 x H x W image, got " + shape_str(t.shape()));
  ImageView img;
  img.h = s[1];
  img.w = s[2];
  img.rgb.resize(t.numel());
  auto v = t.values();
  for (int64_t i = 0; i < t.numel(); ++i) {
    const double x = static_cast<double>(v[i]);
    if (!std::isfinite(x)) fail("matting: image contains non-finite pixels");
    if (check_range) {
      if (x < -1e-6 || x > 1.0 + 1e-6)
        fail("matting: pixel value " + std::to_string(x) +
             " outside [0,1]; convert before building the Laplacian");
      img.rgb[i] = std::min(1.0, std::max(0.0, x));
    } else {
      img.rgb[i] = x;
    }
  }
  return img;
}

// inverse of a symmetric 3x3 via the adjugate
struct Sym3 {
  double a, b, c, d, e, f;  // [[a,b,c],[b,d,e],[c,e,f]]
};

Sym3 invert(const Sym3& s) {
  const double A = s.d * s.f - s.e * s.e;
  const double B = s.c * s.e - s.b * s.f;
  const double C = s.b * s.e - s.c * s.d;
  const double det = s.a * A + s.b * B + s.c * C;
  const double D = s.a * s.f - s.c * s.c;
  const double E = s.b * s.c - s.a * s.e;
  const double F = s.a * s.d - s.b * s.b;
  return {A / det, B / det, C / det, D / det, E / det, F / det};
}

double bilinear(const Sym3& m, const double* u, const double* v) {
  const double mv0 = m.a * v[0] + m.b * v[1] + m.c * v[2];
  const double mv1 = m.b * v[0] + m.d * v[1] + m.e * v[2];
  const double mv2 = m.c * v[0] + m.e * v[1] + m.f * v[2];
  return u[0] * mv0 + u[1] * mv1 + u[2] * mv2;
}

}  // namespace

int64_t matting_window_count(int64_t h, int64_t w, int radius) {
  return (h - 2 * radius) * (w - 2 * radius);
}

SparseSym::SparseSym(int64_t n, std::vector<int64_t> row_offsets,
                     std::vector<int32_t> col_indices, std::vector<double> values)
    : n_(n),
      row_offsets_(std::move(row_offsets)),
      col_indices_(std::move(col_indices)),
      values_(std::move(values)) {
  if (static_cast<int64_t>(row_offsets_.size()) != n_ + 1)
    fail("SparseSym: row offsets must have order+1 entries");
  if (col_indices_.size() != values_.size()) fail("SparseSym: index/value size mismatch");
}

void SparseSym::multiply(std::span<const double> v, std::span<double> out) const {
  if (static_cast<int64_t>(v.size()) != n_ || static_cast<int64_t>(out.size()) != n_)
    fail("SparseSym::multiply: vector length " + std::to_string(v.size()) +
         " does not match order " + std::to_string(n_));
  for (int64_t i = 0; i < n_; ++i) {
    double s = 0.0;
    for (int64_t p = row_offsets_[i]; p < row_offsets_[i + 1]; ++p)
      s += values_[p] * v[col_indices_[p]];
    out[i] = s;
  }
}

double SparseSym::quadratic_form(std::span<const double> v) const {
  if (static_cast<int64_t>(v.size()) != n_)
    fail("SparseSym::quadratic_form: vector length " + std::to_string(v.size()) +
         " does not match order " + std::to_string(n_));
  double total = 0.0;
  for (int64_t i = 0; i < n_; ++i) {
    double s = 0.0;
    for (int64_t p = row_offsets_[i]; p < row_offsets_[i + 1]; ++p)
      s += values_[p] * v[col_indices_[p]];
    total += v[i] * s;
  }
  return total;
}

double SparseSym::max_abs_row_sum() const {
  double worst = 0.0;
  for (int64_t i = 0; i < n_; ++i) {
    double s = 0.0;
    for (int64_t p = row_offsets_[i]; p < row_offsets_[i + 1]; ++p) s += values_[p];
    worst = std::max(worst, std::abs(s));
  }
  return worst;
}

double SparseSym::max_asymmetry() const {
  const auto d = dense();
  double worst = 0.0;
  for (int64_t i = 0; i < n_; ++i)
    for (int64_t j = 0; j < n_; ++j)
      worst = std::max(worst, std::abs(d[i * n_ + j] - d[j * n_ + i]));
  return worst;
}

std::vector<double> SparseSym::dense() const {
  if (n_ > 8192) fail("SparseSym::dense: order too large to densify");
  std::vector<double> d(n_ * n_, 0.0);
  for (int64_t i = 0; i < n_; ++i)
    for (int64_t p = row_offsets_[i]; p < row_offsets_[i + 1]; ++p)
      d[i * n_ + col_indices_[p]] = values_[p];
  return d;
}

template <typename T>
SparseSym build_matting_laplacian(const BasicTensor<T>& image, const MattingConfig& cfg) {
  const int r = cfg.window_radius;
  if (r < 1) fail("matting: window radius must be >= 1");
  if (cfg.eps <= 0) fail("matting: eps must be > 0");
  const ImageView img = to_image01(image, /*check_range=*/true);
  const int64_t H = img.h, W = img.w;
  if (H < 2 * r + 1 || W < 2 * r + 1)
    fail("matting: image " + std::to_string(H) + "x" + std::to_string(W) +
         " too small for window radius " + std::to_string(r));
  const int64_t N = H * W;
  const int side = 2 * r + 1;
  const int m = side * side;
  const int band = 4 * r + 1;  // neighbor offsets per axis
  const int64_t band2 = static_cast<int64_t>(band) * band;

  std::vector<double> acc(N * band2, 0.0);
  std::vector<uint8_t> touched(N * band2, 0);

  std::vector<double> colors(3 * m);
  std::vector<int64_t> pix(m);
  std::vector<double> diffs(3 * m);

  for (int64_t cy = r; cy < H - r; ++cy) {
    for (int64_t cx = r; cx < W - r; ++cx) {
      int idx = 0;
      double mean[3] = {0, 0, 0};
      for (int64_t y = cy - r; y <= cy + r; ++y)
        for (int64_t x = cx - r; x <= cx + r; ++x, ++idx) {
          pix[idx] = y * W + x;
          for (int c = 0; c < 3; ++c) {
            const double v = img.at(c, y, x);
            colors[idx * 3 + c] = v;
            mean[c] += v;
          }
        }
      for (double& v : mean) v /= m;
      Sym3 cov{0, 0, 0, 0, 0, 0};
      for (int i = 0; i < m; ++i) {
        double* d = &diffs[i * 3];
        for (int c = 0; c < 3; ++c) d[c] = colors[i * 3 + c] - mean[c];
        cov.a += d[0] * d[0];
        cov.b += d[0] * d[1];
        cov.c += d[0] * d[2];
        cov.d += d[1] * d[1];
        cov.e += d[1] * d[2];
        cov.f += d[2] * d[2];
      }
      const double reg = cfg.eps / m;
      cov.a = cov.a / m + reg;
      cov.b /= m;
      cov.c /= m;
      cov.d = cov.d / m + reg;
      cov.e /= m;
      cov.f = cov.f / m + reg;
      const Sym3 inv = invert(cov);

      // mirror each off-diagonal pair so the matrix is exactly symmetric
      for (int i = 0; i < m; ++i) {
        for (int j = i; j < m; ++j) {
          const double q =
              (i == j ? 1.0 : 0.0) -
              (1.0 + bilinear(inv, &diffs[i * 3], &diffs[j * 3])) / m;
          const int64_t pi = pix[i], pj = pix[j];
          const int64_t yi = pi / W, xi = pi % W;
          const int64_t yj = pj / W, xj = pj % W;
          const int64_t slot_ij = (yj - yi + 2 * r) * band + (xj - xi + 2 * r);
          acc[pi * band2 + slot_ij] += q;
          touched[pi * band2 + slot_ij] = 1;
          if (i != j) {
            const int64_t slot_ji = (yi - yj + 2 * r) * band + (xi - xj + 2 * r);
            acc[pj * band2 + slot_ji] += q;
            touched[pj * band2 + slot_ji] = 1;
          }
        }
      }
    }
  }

  std::vector<int64_t> offsets(N + 1, 0);
  std::vector<int32_t> cols;
  std::vector<double> vals;
  cols.reserve(N * band2 / 2);
  vals.reserve(N * band2 / 2);
  for (int64_t p = 0; p < N; ++p) {
    const int64_t y = p / W, x = p % W;
    for (int64_t dy = -2 * r; dy <= 2 * r; ++dy)
      for (int64_t dx = -2 * r; dx <= 2 * r; ++dx) {
        const int64_t slot = (dy + 2 * r) * band + (dx + 2 * r);
        if (!touched[p * band2 + slot]) continue;
        const int64_t q = (y + dy) * W + (x + dx);
        cols.push_back(static_cast<int32_t>(q));
        vals.push_back(acc[p * band2 + slot]);
      }
    offsets[p + 1] = static_cast<int64_t>(cols.size());
  }
  return SparseSym(N, std::move(offsets), std::move(cols), std::move(vals));
}

template <typename T>
BasicTensor<T> affine_loss(const SparseSym& m, const BasicTensor<T>& image) {
  Shape s = image.shape();
  if (s.size() == 4 && s[0] == 1) s.erase(s.begin());
  if (s.size() != 3 || s[0] != 3)
    fail("affine_loss: expected a 3 x H x W image, got " + shape_str(image.shape()));
  const int64_t N = s[1] * s[2];
  if (m.order() != N)
    fail("affine_loss: Laplacian order " + std::to_string(m.order()) +
         " does not match image with " + std::to_string(N) + " pixels");

  auto xv = image.values();
  auto mv = std::make_shared<std::vector<double>>(3 * N);  // M V_c per channel
  double total = 0.0;
  std::vector<double> vc(N);
  for (int c = 0; c < 3; ++c) {
    for (int64_t i = 0; i < N; ++i) vc[i] = static_cast<double>(xv[c * N + i]);
    std::span<double> out(mv->data() + c * N, N);
    m.multiply(vc, out);
    double q = 0.0;
    for (int64_t i = 0; i < N; ++i) q += vc[i] * out[i];
    total += q;
  }

  auto& g = *image.graph();
  return g.make_node({1}, {static_cast<T>(total)}, {image},
                     [mv, N](detail::Node<T>& self) {
    auto& xin = *self.inputs[0];
    if (!xin.requires_grad) return;
    auto& gx = xin.grad_buffer();
    const T gy = (*self.grad)[0];
    for (int64_t i = 0; i < 3 * N; ++i)
      gx[i] += gy * static_cast<T>(2.0 * (*mv)[i]);
  });
}

template <typename T>
std::vector<T> affine_loss_grad(const SparseSym& m, const BasicTensor<T>& image) {
  Shape s = image.shape();
  if (s.size() == 4 && s[0] == 1) s.erase(s.begin());
  if (s.size() != 3 || s[0] != 3)
    fail("affine_loss_grad: expected a 3 x H x W image, got " + shape_str(image.shape()));
  const int64_t N = s[1] * s[2];
  if (m.order() != N)
    fail("affine_loss_grad: Laplacian order " + std::to_string(m.order()) +
         " does not match image with " + std::to_string(N) + " pixels");
  auto xv = image.values();
  std::vector<T> grad(3 * N);
  std::vector<double> vc(N), out(N);
  for (int c = 0; c < 3; ++c) {
    for (int64_t i = 0; i < N; ++i) vc[i] = static_cast<double>(xv[c * N + i]);
    m.multiply(vc, out);
    for (int64_t i = 0; i < N; ++i) grad[c * N + i] = static_cast<T>(2.0 * out[i]);
  }
  return grad;
}

template <typename T>
double brute_force_affine_cost(const BasicTensor<T>& image,
                               std::span<const double> alpha,
                               const MattingConfig& cfg) {
  const int r = cfg.window_radius;
  const ImageView img = to_image01(image, /*check_range=*/true);
  const int64_t H = img.h, W = img.w;
  if (H > 8 || W > 8)
    fail("brute_force_affine_cost: dense per-window solves are restricted to images up to 8x8");
  if (H < 2 * r + 1 || W < 2 * r + 1)
    fail("brute_force_affine_cost: image too small for window radius " +
         std::to_string(r));
  if (static_cast<int64_t>(alpha.size()) != H * W)
    fail("brute_force_affine_cost: alpha length does not match pixel count");
  if (cfg.eps <= 0) fail("brute_force_affine_cost: eps must be > 0");

  double total = 0.0;
  for (int64_t cy = r; cy < H - r; ++cy) {
    for (int64_t cx = r; cx < W - r; ++cx) {
      // normal equations for theta = (a1, a2, a3, b)
      double ata[4][4] = {};
      double atb[4] = {};
      for (int64_t y = cy - r; y <= cy + r; ++y)
        for (int64_t x = cx - r; x <= cx + r; ++x) {
          const double row[4] = {img.at(0, y, x), img.at(1, y, x), img.at(2, y, x), 1.0};
          const double av = alpha[y * W + x];
          for (int i = 0; i < 4; ++i) {
            for (int j = 0; j < 4; ++j) ata[i][j] += row[i] * row[j];
            atb[i] += row[i] * av;
          }
        }
      for (int i = 0; i < 3; ++i) ata[i][i] += cfg.eps;

      // 4x4 Gaussian elimination with partial pivoting
      double a[4][5];
      for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 4; ++j) a[i][j] = ata[i][j];
        a[i][4] = atb[i];
      }
      for (int col = 0; col < 4; ++col) {
        int piv = col;
        for (int rr = col + 1; rr < 4; ++rr)
          if (std::abs(a[rr][col]) > std::abs(a[piv][col])) piv = rr;
        if (a[piv][col] == 0.0)
          throw std::runtime_error("brute_force_affine_cost: singular normal system");
        if (piv != col)
          for (int j = 0; j <= 4; ++j) std::swap(a[piv][j], a[col][j]);
        for (int rr = col + 1; rr < 4; ++rr) {
          const double f = a[rr][col] / a[col][col];
          for (int j = col; j <= 4; ++j) a[rr][j] -= f * a[col][j];
        }
      }
      double theta[4];
      for (int i = 3; i >= 0; --i) {
        double s = a[i][4];
        for (int j = i + 1; j < 4; ++j) s -= a[i][j] * theta[j];
        theta[i] = s / a[i][i];
      }

      double cost = cfg.eps * (theta[0] * theta[0] + theta[1] * theta[1] +
                               theta[2] * theta[2]);
      for (int64_t y = cy - r; y <= cy + r; ++y)
        for (int64_t x = cx - r; x <= cx + r; ++x) {
          const double pred = theta[0] * img.at(0, y, x) + theta[1] * img.at(1, y, x) +
                              theta[2] * img.at(2, y, x) + theta[3];
          const double res = alpha[y * W + x] - pred;
          cost += res * res;
        }
      total += cost;
    }
  }
  return total;
}

#define SSIT_INSTANTIATE_MATTING(T)                                                     \
  template SparseSym build_matting_laplacian<T>(const BasicTensor<T>&,                  \
                                                const MattingConfig&);                  \
  template BasicTensor<T> affine_loss<T>(const SparseSym&, const BasicTensor<T>&);      \
  template std::vector<T> affine_loss_grad<T>(const SparseSym&, const BasicTensor<T>&); \
  template double brute_force_affine_cost<T>(const BasicTensor<T>&,                     \
                                             std::span<const double>,                   \
                                             const MattingConfig&);

SSIT_INSTANTIATE_MATTING(float)
SSIT_INSTANTIATE_MATTING(double)

}  // namespace ssit
