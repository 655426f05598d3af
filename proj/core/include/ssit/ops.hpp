#pragma once

#include "ssit/tensor.hpp"

namespace ssit {

enum class PadMode { zero, reflect };

// All operations are pure: inputs are never mutated, outputs are freshly
// allocated. Every op participates in reverse-mode differentiation when an
// input requires a gradient.
//
// conv2d accumulates over (in-channel, kernel-row, kernel-col) in ascending
// order with fused multiply-add semantics, starting from the bias. This is
// the contract the nested-loop reference in the tests reproduces bit for bit.

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                      const BasicTensor<T>& bias, int stride, int padding,
                      PadMode pad_mode = PadMode::zero);

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& x);
template <typename T>
BasicTensor<T> leaky_relu(const BasicTensor<T>& x, T slope);
template <typename T>
BasicTensor<T> tanh_act(const BasicTensor<T>& x);
template <typename T>
BasicTensor<T> sigmoid(const BasicTensor<T>& x);

// per-sample, per-channel spatial normalization, variance stabilizer 1e-5
template <typename T>
BasicTensor<T> instance_norm(const BasicTensor<T>& x, const BasicTensor<T>& gamma,
                             const BasicTensor<T>& beta);
// like instance_norm but gamma/beta are computed tensors (style path), so
// gradients flow into them
template <typename T>
BasicTensor<T> adain(const BasicTensor<T>& content_feat, const BasicTensor<T>& gamma,
                     const BasicTensor<T>& beta);

template <typename T>
BasicTensor<T> global_avg_pool(const BasicTensor<T>& x);
// 3x3 average pooling, stride 2, pad 1, averaging over valid taps only
template <typename T>
BasicTensor<T> avg_pool_halve(const BasicTensor<T>& x);

template <typename T>
BasicTensor<T> fully_connected(const BasicTensor<T>& x, const BasicTensor<T>& weight,
                               const BasicTensor<T>& bias);

template <typename T>
BasicTensor<T> upsample_nearest(const BasicTensor<T>& x, int factor);

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b);
// elementwise a*x + b
template <typename T>
BasicTensor<T> affine_map(const BasicTensor<T>& x, T a, T b);
template <typename T>
BasicTensor<T> square(const BasicTensor<T>& x);
template <typename T>
BasicTensor<T> clamp(const BasicTensor<T>& x, T lo, T hi);
template <typename T>
BasicTensor<T> log_nat(const BasicTensor<T>& x);

template <typename T>
BasicTensor<T> mean_all(const BasicTensor<T>& x);
template <typename T>
BasicTensor<T> sum_all(const BasicTensor<T>& x);

// mean absolute elementwise difference (the mean-form L1 used by the
// reconstruction losses)
template <typename T>
BasicTensor<T> l1_distance(const BasicTensor<T>& a, const BasicTensor<T>& b);

template <typename T>
BasicTensor<T> reshape(const BasicTensor<T>& x, Shape shape);
// contiguous column slice of a [1 x n] tensor
template <typename T>
BasicTensor<T> slice_vec(const BasicTensor<T>& x, int64_t begin, int64_t end);

}  // namespace ssit
