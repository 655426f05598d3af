#pragma once

#include <cstdint>
#include <functional>

namespace ssit {

// C[M x N] += A[M x K] * B[K x N], all row-major and contiguous.
//
// Accumulation contract: every output element starts from the value already
// in C and is updated with fused multiply-adds over k in ascending order.
// The result is therefore identical for every kernel variant, tile shape,
// SIMD width and thread count; conv2d inherits bit-reproducibility from it.
void gemm_accumulate(const float* a, const float* b, float* c,
                     int64_t m, int64_t n, int64_t k);
void gemm_accumulate(const double* a, const double* b, double* c,
                     int64_t m, int64_t n, int64_t k);

enum class GemmKernel { automatic, base, avx2, avx512 };

// Kernel selection is process-wide. `automatic` picks the widest ISA the CPU
// supports. Exposed so tests can assert that all variants agree bitwise.
void set_gemm_kernel(GemmKernel k);
GemmKernel active_gemm_kernel();

// Static partition of [begin, end) over a persistent pool. Chunks are
// assigned deterministically; fn(chunk_begin, chunk_end) must only write
// state disjoint from other chunks.
void parallel_for(int64_t begin, int64_t end,
                  const std::function<void(int64_t, int64_t)>& fn);
int worker_count();

}  // namespace ssit
