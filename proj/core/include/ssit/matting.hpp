#pragma once

#include <span>
#include <vector>

#include "ssit/tensor.hpp"

namespace ssit {

struct MattingConfig {
  int window_radius = 1;  // 1 => 3x3 windows
  double eps = 1e-5;      // least-squares regularization weight
};

// Symmetric positive semi-definite Laplacian in CSR form, built from local
// window color statistics of a reference image. Constant vectors lie in its
// null space and every row sums to zero.
class SparseSym {
 public:
  int64_t order() const { return n_; }
  int64_t nnz() const { return static_cast<int64_t>(values_.size()); }

  std::span<const int64_t> row_offsets() const { return row_offsets_; }
  std::span<const int32_t> col_indices() const { return col_indices_; }
  std::span<const double> values() const { return values_; }

  void multiply(std::span<const double> v, std::span<double> out) const;
  double quadratic_form(std::span<const double> v) const;
  double max_abs_row_sum() const;
  double max_asymmetry() const;
  std::vector<double> dense() const;  // tiny orders only (diagnose/test aid)

  SparseSym(int64_t n, std::vector<int64_t> row_offsets,
            std::vector<int32_t> col_indices, std::vector<double> values);

 private:
  int64_t n_ = 0;
  std::vector<int64_t> row_offsets_;
  std::vector<int32_t> col_indices_;
  std::vector<double> values_;
};

// Closed-form matting Laplacian of a [3 x H x W] (or [1 x 3 x H x W]) image
// with values in [0, 1]. Windows are the (2r+1)^2 patches fully inside the
// image.
template <typename T>
SparseSym build_matting_laplacian(const BasicTensor<T>& image, const MattingConfig& cfg);

int64_t matting_window_count(int64_t h, int64_t w, int radius);

// sum over the three channels of V_c^T M V_c, with V_c the row-major
// vectorization of channel c. Differentiable; the gradient per channel is
// 2 M V_c.
template <typename T>
BasicTensor<T> affine_loss(const SparseSym& m, const BasicTensor<T>& image);

// plain (non-graph) gradient of affine_loss with respect to the image
template <typename T>
std::vector<T> affine_loss_grad(const SparseSym& m, const BasicTensor<T>& image);

// Independent oracle: per window, solves the regularized least squares
//   min_{a,b} sum_{i in w} (alpha_i - a^T I_i - b)^2 + eps |a|^2
// by dense normal equations and sums the minima. Defined for tiny images
// only; equals alpha^T M alpha up to rounding.
template <typename T>
double brute_force_affine_cost(const BasicTensor<T>& image,
                               std::span<const double> alpha,
                               const MattingConfig& cfg);

}  // namespace ssit
