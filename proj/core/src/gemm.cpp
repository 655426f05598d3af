#include "ssit/gemm.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <condition_variable>
#include <cstdlib>
#include <mutex>
#include <thread>
#include <vector>

namespace ssit {

// ---------------------------------------------------------------------------
// thread pool
// ---------------------------------------------------------------------------

namespace {

void mark_pool_thread();

class Pool {
 public:
  Pool() {
    int n = static_cast<int>(std::thread::hardware_concurrency());
    if (const char* env = std::getenv("SSIT_THREADS")) {
      int v = std::atoi(env);
      if (v >= 1) n = v;
    }
    n = std::max(1, n);
    workers_ = n - 1;  // calling thread participates
    threads_.reserve(workers_);
    for (int i = 0; i < workers_; ++i) {
      threads_.emplace_back([this, i] { worker_loop(i); });
    }
  }

  ~Pool() {
    {
      std::lock_guard<std::mutex> lk(mu_);
      stop_ = true;
    }
    cv_.notify_all();
    for (auto& t : threads_) t.join();
  }

  int size() const { return workers_ + 1; }

  void run(int64_t begin, int64_t end,
           const std::function<void(int64_t, int64_t)>& fn) {
    const int64_t total = end - begin;
    if (total <= 0) return;
    const int nw = std::min<int64_t>(size(), total);
    if (nw == 1) {
      fn(begin, end);
      return;
    }
    {
      std::lock_guard<std::mutex> lk(mu_);
      job_fn_ = &fn;
      job_begin_ = begin;
      job_end_ = end;
      job_nw_ = nw;
      pending_.store(nw - 1, std::memory_order_relaxed);
      ++epoch_;
    }
    cv_.notify_all();
    run_chunk(0);  // chunk 0 on the calling thread
    {
      std::unique_lock<std::mutex> lk(mu_);
      done_cv_.wait(lk, [this] { return pending_.load() == 0; });
      job_fn_ = nullptr;
    }
  }

 private:
  void run_chunk(int idx) {
    const int64_t total = job_end_ - job_begin_;
    const int64_t lo = job_begin_ + total * idx / job_nw_;
    const int64_t hi = job_begin_ + total * (idx + 1) / job_nw_;
    if (lo < hi) (*job_fn_)(lo, hi);
  }

  void worker_loop(int id) {
    mark_pool_thread();
    uint64_t seen = 0;
    for (;;) {
      {
        std::unique_lock<std::mutex> lk(mu_);
        cv_.wait(lk, [&] { return stop_ || epoch_ != seen; });
        if (stop_) return;
        seen = epoch_;
      }
      if (id + 1 < job_nw_) {
        run_chunk(id + 1);
        if (pending_.fetch_sub(1) == 1) {
          std::lock_guard<std::mutex> lk(mu_);
          done_cv_.notify_one();
        }
      }
    }
  }

  std::mutex mu_;
  std::condition_variable cv_, done_cv_;
  std::vector<std::thread> threads_;
  const std::function<void(int64_t, int64_t)>* job_fn_ = nullptr;
  int64_t job_begin_ = 0, job_end_ = 0;
  int job_nw_ = 0;
  std::atomic<int> pending_{0};
  uint64_t epoch_ = 0;
  bool stop_ = false;
  int workers_ = 0;
};

Pool& pool() {
  static Pool p;
  return p;
}

thread_local bool tl_in_pool = false;

void mark_pool_thread() { tl_in_pool = true; }

}  // namespace

void parallel_for(int64_t begin, int64_t end,
                  const std::function<void(int64_t, int64_t)>& fn) {
  if (tl_in_pool) {  // no nesting: run the nested region inline
    if (begin < end) fn(begin, end);
    return;
  }
  tl_in_pool = true;
  pool().run(begin, end, fn);
  tl_in_pool = false;
}

int worker_count() { return pool().size(); }

// ---------------------------------------------------------------------------
// micro-kernels
// ---------------------------------------------------------------------------
//
// Every variant computes an MR x NR tile of C with one accumulator per
// element, updated over k in ascending order via std::fma. Tile shape and
// vector width never change per-element rounding, so all variants produce
// identical bits. The accumulator is seeded from C itself (conv2d seeds C
// with the bias, matching the reference accumulation order).

namespace {

template <typename T, int MR, int NR>
__attribute__((always_inline)) inline void tile_body(
    const T* __restrict a, const T* __restrict b, T* __restrict c,
    int64_t k_len, int64_t lda, int64_t ldb, int64_t ldc) {
  T acc[MR][NR];
  for (int i = 0; i < MR; ++i)
    for (int j = 0; j < NR; ++j) acc[i][j] = c[i * ldc + j];
  for (int64_t kk = 0; kk < k_len; ++kk) {
    const T* brow = b + kk * ldb;
    for (int i = 0; i < MR; ++i) {
      const T av = a[i * lda + kk];
      for (int j = 0; j < NR; ++j)
        acc[i][j] = std::fma(av, brow[j], acc[i][j]);
    }
  }
  for (int i = 0; i < MR; ++i)
    for (int j = 0; j < NR; ++j) c[i * ldc + j] = acc[i][j];
}

// ragged edge: same per-element math, dynamic bounds
template <typename T>
__attribute__((always_inline)) inline void edge_body(
    const T* __restrict a, const T* __restrict b, T* __restrict c, int mr,
    int nr, int64_t k_len, int64_t lda, int64_t ldb, int64_t ldc) {
  for (int i = 0; i < mr; ++i) {
    T acc[64];
    for (int j = 0; j < nr; ++j) acc[j] = c[i * ldc + j];
    for (int64_t kk = 0; kk < k_len; ++kk) {
      const T av = a[i * lda + kk];
      const T* brow = b + kk * ldb;
      for (int j = 0; j < nr; ++j) acc[j] = std::fma(av, brow[j], acc[j]);
    }
    for (int j = 0; j < nr; ++j) c[i * ldc + j] = acc[j];
  }
}

// all full and ragged tiles for rows [r0, r1); optionally packs each B column
// panel into thread-local contiguous storage before sweeping its row blocks
template <typename T, int MR, int NR>
__attribute__((always_inline)) inline void sweep_rows(const T* a, const T* b,
                                                      T* c, int64_t r0,
                                                      int64_t r1, int64_t n,
                                                      int64_t k, bool pack) {
  static thread_local std::vector<T> panel_store;
  T* panel = nullptr;
  if (pack && n >= NR) {
    panel_store.resize(static_cast<size_t>(k) * NR);
    panel = panel_store.data();
  }
  int64_t n0 = 0;
  for (; n0 + NR <= n; n0 += NR) {
    const T* bsrc = b + n0;
    int64_t ldb = n;
    if (panel) {
      for (int64_t kk = 0; kk < k; ++kk)
        for (int j = 0; j < NR; ++j) panel[kk * NR + j] = bsrc[kk * n + j];
      bsrc = panel;
      ldb = NR;
    }
    int64_t i = r0;
    for (; i + MR <= r1; i += MR)
      tile_body<T, MR, NR>(a + i * k, bsrc, c + i * n + n0, k, k, ldb, n);
    if (i < r1)
      edge_body<T>(a + i * k, bsrc, c + i * n + n0,
                   static_cast<int>(r1 - i), NR, k, k, ldb, n);
  }
  if (n0 < n) {
    for (int64_t i = r0; i < r1; i += MR) {
      const int mr = static_cast<int>(std::min<int64_t>(MR, r1 - i));
      for (int64_t j = n0; j < n; j += 48) {
        const int nr = static_cast<int>(std::min<int64_t>(48, n - j));
        edge_body<T>(a + i * k, b + j, c + i * n + j, mr, nr, k, k, n, n);
      }
    }
  }
}

template <typename T, int MR, int NR>
inline void gemm_body(const T* a, const T* b, T* c, int64_t m, int64_t n,
                      int64_t k,
                      void (*rows)(const T*, const T*, T*, int64_t, int64_t,
                                   int64_t, int64_t, bool)) {
  // packing pays when B reads are long-strided and the panel is reused
  // across many row blocks
  const bool pack = n * static_cast<int64_t>(sizeof(T)) >= 1024 &&
                    k >= 512 && m >= 4 * MR;
  const int64_t mblocks = (m + MR - 1) / MR;
  if (2 * m * n * k < (1 << 17)) {
    rows(a, b, c, 0, m, n, k, false);
    return;
  }
  parallel_for(0, mblocks, [&](int64_t lo, int64_t hi) {
    rows(a, b, c, lo * MR, std::min(hi * MR, m), n, k, pack);
  });
}

#define SSIT_GEMM_VARIANT(suffix, attr, T, MR, NR)                             \
  attr void rows_##suffix(const T* a, const T* b, T* c, int64_t r0,            \
                          int64_t r1, int64_t n, int64_t k, bool pack) {       \
    sweep_rows<T, MR, NR>(a, b, c, r0, r1, n, k, pack);                        \
  }                                                                            \
  void gemm_##suffix(const T* a, const T* b, T* c, int64_t m, int64_t n,       \
                     int64_t k) {                                              \
    gemm_body<T, MR, NR>(a, b, c, m, n, k, rows_##suffix);                     \
  }

#define SSIT_ATTR_AVX2 __attribute__((target("avx2,fma")))
#define SSIT_ATTR_AVX512 __attribute__((target("avx512f,avx512vl,fma")))

SSIT_GEMM_VARIANT(f_base, , float, 4, 8)
SSIT_GEMM_VARIANT(f_avx2, SSIT_ATTR_AVX2, float, 5, 16)
SSIT_GEMM_VARIANT(f_avx512, SSIT_ATTR_AVX512, float, 6, 32)
SSIT_GEMM_VARIANT(d_base, , double, 4, 4)
SSIT_GEMM_VARIANT(d_avx2, SSIT_ATTR_AVX2, double, 5, 8)
SSIT_GEMM_VARIANT(d_avx512, SSIT_ATTR_AVX512, double, 6, 16)

GemmKernel g_kernel = GemmKernel::automatic;

GemmKernel resolve(GemmKernel k) {
  if (k != GemmKernel::automatic) return k;
  if (__builtin_cpu_supports("avx512f") && __builtin_cpu_supports("avx512vl") &&
      __builtin_cpu_supports("fma"))
    return GemmKernel::avx512;
  if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma"))
    return GemmKernel::avx2;
  return GemmKernel::base;
}

}  // namespace

void set_gemm_kernel(GemmKernel k) {
  if (k != GemmKernel::automatic) {
    // refuse to select an unsupported ISA
    GemmKernel r = resolve(GemmKernel::automatic);
    if (k == GemmKernel::avx512 && r != GemmKernel::avx512) return;
    if (k == GemmKernel::avx2 && r == GemmKernel::base) return;
  }
  g_kernel = k;
}

GemmKernel active_gemm_kernel() { return resolve(g_kernel); }

void gemm_accumulate(const float* a, const float* b, float* c, int64_t m,
                     int64_t n, int64_t k) {
  if (m <= 0 || n <= 0 || k <= 0) return;
  switch (resolve(g_kernel)) {
    case GemmKernel::avx512: gemm_f_avx512(a, b, c, m, n, k); break;
    case GemmKernel::avx2: gemm_f_avx2(a, b, c, m, n, k); break;
    default: gemm_f_base(a, b, c, m, n, k); break;
  }
}

void gemm_accumulate(const double* a, const double* b, double* c, int64_t m,
                     int64_t n, int64_t k) {
  if (m <= 0 || n <= 0 || k <= 0) return;
  switch (resolve(g_kernel)) {
    case GemmKernel::avx512: gemm_d_avx512(a, b, c, m, n, k); break;
    case GemmKernel::avx2: gemm_d_avx2(a, b, c, m, n, k); break;
    default: gemm_d_base(a, b, c, m, n, k); break;
  }
}

}  // namespace ssit
