#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <condition_variable>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

#if defined(__AVX512F__) || defined(__AVX2__)
#include <immintrin.h>
#endif

namespace ganlab {

// Worker pool shared by the matrix kernels. Work is partitioned into
// disjoint row blocks, so results are bit-identical for any thread count.
class WorkerPool {
public:
  static WorkerPool& instance() {
    static WorkerPool pool;
    return pool;
  }

  int size() const { return static_cast<int>(workers_.size()) + 1; }

  // Runs fn(begin, end) over [0, n) split into roughly equal chunks,
  // one per worker plus the calling thread. Blocks until all finish.
  // Concurrent submissions serialize; fn must not itself submit work.
  void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& fn) {
    const int nw = size();
    if (nw == 1 || n < 2) {
      fn(0, n);
      return;
    }
    std::lock_guard<std::mutex> submit_lock(submit_mu_);
    const int64_t chunk = (n + nw - 1) / nw;
    {
      std::unique_lock<std::mutex> lock(mu_);
      job_ = &fn;
      job_n_ = n;
      job_chunk_ = chunk;
      next_chunk_.store(1, std::memory_order_relaxed);
      pending_ = static_cast<int>(workers_.size());
      ++generation_;
      cv_start_.notify_all();
    }
    fn(0, std::min<int64_t>(chunk, n));
    run_chunks();
    std::unique_lock<std::mutex> lock(mu_);
    cv_done_.wait(lock, [this] { return pending_ == 0; });
    job_ = nullptr;
  }

private:
  WorkerPool() {
    int n = 0;
    if (const char* env = std::getenv("GANLAB_THREADS")) n = std::atoi(env);
    if (n <= 0) n = static_cast<int>(std::thread::hardware_concurrency());
    n = std::clamp(n, 1, 16);
    for (int i = 0; i < n - 1; ++i)
      workers_.emplace_back([this] { worker_loop(); });
  }

  ~WorkerPool() {
    {
      std::unique_lock<std::mutex> lock(mu_);
      stop_ = true;
      cv_start_.notify_all();
    }
    for (auto& t : workers_) t.join();
  }

  void worker_loop() {
    uint64_t seen = 0;
    for (;;) {
      {
        std::unique_lock<std::mutex> lock(mu_);
        cv_start_.wait(lock, [&] { return stop_ || generation_ != seen; });
        if (stop_) return;
        seen = generation_;
      }
      run_chunks();
      std::unique_lock<std::mutex> lock(mu_);
      if (--pending_ == 0) cv_done_.notify_all();
    }
  }

  void run_chunks() {
    for (;;) {
      int64_t c = next_chunk_.fetch_add(1, std::memory_order_relaxed);
      int64_t begin = c * job_chunk_;
      if (begin >= job_n_) return;
      (*job_)(begin, std::min(begin + job_chunk_, job_n_));
    }
  }

  std::vector<std::thread> workers_;
  std::mutex submit_mu_;
  std::mutex mu_;
  std::condition_variable cv_start_, cv_done_;
  const std::function<void(int64_t, int64_t)>* job_ = nullptr;
  int64_t job_n_ = 0, job_chunk_ = 0;
  std::atomic<int64_t> next_chunk_{0};
  int pending_ = 0;
  uint64_t generation_ = 0;
  bool stop_ = false;
};

namespace detail {

// Register-blocked microkernels. MR x NR accumulator tiles; gcc maps the
// fixed-size inner loops onto vector FMAs at -O3.
constexpr int64_t kMR = 4;
constexpr int64_t kNR = 32;

// C[i0:i1, :] = A (i1-i0 x K) * B (K x N); A rows indexed from i0.
inline void gemm_nn_block(int64_t i0, int64_t i1, int64_t N, int64_t K,
                          const double* A, int64_t lda, const double* B,
                          int64_t ldb, double* C, int64_t ldc) {
  for (int64_t i = i0; i < i1; i += kMR) {
    const int64_t mr = std::min(kMR, i1 - i);
    int64_t j = 0;
    for (; j + kNR <= N; j += kNR) {
      double acc[kMR][kNR] = {};
      for (int64_t k = 0; k < K; ++k) {
        const double* brow = B + k * ldb + j;
        for (int64_t r = 0; r < kMR; ++r) {
          if (r >= mr) break;
          const double a = A[(i + r) * lda + k];
          for (int64_t c = 0; c < kNR; ++c) acc[r][c] += a * brow[c];
        }
      }
      for (int64_t r = 0; r < mr; ++r)
        for (int64_t c = 0; c < kNR; ++c) C[(i + r) * ldc + j + c] = acc[r][c];
    }
    if (j < N) {
      const int64_t nr = N - j;
      for (int64_t r = 0; r < mr; ++r) {
        double acc[kNR] = {};
        for (int64_t k = 0; k < K; ++k) {
          const double a = A[(i + r) * lda + k];
          const double* brow = B + k * ldb + j;
          for (int64_t c = 0; c < nr; ++c) acc[c] += a * brow[c];
        }
        for (int64_t c = 0; c < nr; ++c) C[(i + r) * ldc + j + c] = acc[c];
      }
    }
  }
}

// Four simultaneous dot products of arow against b0..b3, length K.
inline void dot4(const double* arow, const double* b0, const double* b1,
                 const double* b2, const double* b3, int64_t K, double* out) {
#if defined(__AVX512F__)
  __m512d a0 = _mm512_setzero_pd(), a1 = _mm512_setzero_pd();
  __m512d a2 = _mm512_setzero_pd(), a3 = _mm512_setzero_pd();
  int64_t k = 0;
  for (; k + 8 <= K; k += 8) {
    __m512d va = _mm512_loadu_pd(arow + k);
    a0 = _mm512_fmadd_pd(va, _mm512_loadu_pd(b0 + k), a0);
    a1 = _mm512_fmadd_pd(va, _mm512_loadu_pd(b1 + k), a1);
    a2 = _mm512_fmadd_pd(va, _mm512_loadu_pd(b2 + k), a2);
    a3 = _mm512_fmadd_pd(va, _mm512_loadu_pd(b3 + k), a3);
  }
  double s0 = _mm512_reduce_add_pd(a0), s1 = _mm512_reduce_add_pd(a1);
  double s2 = _mm512_reduce_add_pd(a2), s3 = _mm512_reduce_add_pd(a3);
#elif defined(__AVX2__)
  __m256d a0 = _mm256_setzero_pd(), a1 = _mm256_setzero_pd();
  __m256d a2 = _mm256_setzero_pd(), a3 = _mm256_setzero_pd();
  int64_t k = 0;
  for (; k + 4 <= K; k += 4) {
    __m256d va = _mm256_loadu_pd(arow + k);
    a0 = _mm256_fmadd_pd(va, _mm256_loadu_pd(b0 + k), a0);
    a1 = _mm256_fmadd_pd(va, _mm256_loadu_pd(b1 + k), a1);
    a2 = _mm256_fmadd_pd(va, _mm256_loadu_pd(b2 + k), a2);
    a3 = _mm256_fmadd_pd(va, _mm256_loadu_pd(b3 + k), a3);
  }
  double lanes[4];
  auto hsum = [&lanes](__m256d v) {
    _mm256_storeu_pd(lanes, v);
    return (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
  };
  double s0 = hsum(a0), s1 = hsum(a1), s2 = hsum(a2), s3 = hsum(a3);
#else
  int64_t k = 0;
  double s0 = 0, s1 = 0, s2 = 0, s3 = 0;
#endif
  for (; k < K; ++k) {
    const double a = arow[k];
    s0 += a * b0[k];
    s1 += a * b1[k];
    s2 += a * b2[k];
    s3 += a * b3[k];
  }
  out[0] = s0;
  out[1] = s1;
  out[2] = s2;
  out[3] = s3;
}

#if defined(__AVX512F__)
// 2x4 tile of dot products; amortizes the B row loads across two A rows.
inline void dot2x4(const double* a0r, const double* a1r, const double* b0,
                   const double* b1, const double* b2, const double* b3,
                   int64_t K, double* out0, double* out1) {
  __m512d acc[2][4];
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 4; ++c) acc[r][c] = _mm512_setzero_pd();
  int64_t k = 0;
  for (; k + 8 <= K; k += 8) {
    __m512d va0 = _mm512_loadu_pd(a0r + k);
    __m512d va1 = _mm512_loadu_pd(a1r + k);
    __m512d vb0 = _mm512_loadu_pd(b0 + k);
    __m512d vb1 = _mm512_loadu_pd(b1 + k);
    __m512d vb2 = _mm512_loadu_pd(b2 + k);
    __m512d vb3 = _mm512_loadu_pd(b3 + k);
    acc[0][0] = _mm512_fmadd_pd(va0, vb0, acc[0][0]);
    acc[0][1] = _mm512_fmadd_pd(va0, vb1, acc[0][1]);
    acc[0][2] = _mm512_fmadd_pd(va0, vb2, acc[0][2]);
    acc[0][3] = _mm512_fmadd_pd(va0, vb3, acc[0][3]);
    acc[1][0] = _mm512_fmadd_pd(va1, vb0, acc[1][0]);
    acc[1][1] = _mm512_fmadd_pd(va1, vb1, acc[1][1]);
    acc[1][2] = _mm512_fmadd_pd(va1, vb2, acc[1][2]);
    acc[1][3] = _mm512_fmadd_pd(va1, vb3, acc[1][3]);
  }
  double s[2][4];
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 4; ++c) s[r][c] = _mm512_reduce_add_pd(acc[r][c]);
  const double* bs[4] = {b0, b1, b2, b3};
  for (; k < K; ++k)
    for (int c = 0; c < 4; ++c) {
      s[0][c] += a0r[k] * bs[c][k];
      s[1][c] += a1r[k] * bs[c][k];
    }
  for (int c = 0; c < 4; ++c) {
    out0[c] = s[0][c];
    out1[c] = s[1][c];
  }
}
#endif

// C[i0:i1, :] = A (rows i0.., M x K) * B^T (N x K rows): dot products.
inline void gemm_nt_block(int64_t i0, int64_t i1, int64_t N, int64_t K,
                          const double* A, int64_t lda, const double* B,
                          int64_t ldb, double* C, int64_t ldc) {
  int64_t i = i0;
#if defined(__AVX512F__)
  for (; i + 2 <= i1; i += 2) {
    const double* a0r = A + i * lda;
    const double* a1r = A + (i + 1) * lda;
    int64_t j = 0;
    for (; j + 4 <= N; j += 4)
      dot2x4(a0r, a1r, B + j * ldb, B + (j + 1) * ldb, B + (j + 2) * ldb,
             B + (j + 3) * ldb, K, C + i * ldc + j, C + (i + 1) * ldc + j);
    for (; j < N; ++j) {
      const double* last = B + j * ldb;
      double t0[4], t1[4];
      dot2x4(a0r, a1r, last, last, last, last, K, t0, t1);
      C[i * ldc + j] = t0[0];
      C[(i + 1) * ldc + j] = t1[0];
    }
  }
#endif
  for (; i < i1; ++i) {
    const double* arow = A + i * lda;
    int64_t j = 0;
    for (; j + 4 <= N; j += 4)
      dot4(arow, B + j * ldb, B + (j + 1) * ldb, B + (j + 2) * ldb,
           B + (j + 3) * ldb, K, C + i * ldc + j);
    for (; j < N; ++j) {
      const double* last = B + j * ldb;
      double tmp[4];
      dot4(arow, last, last, last, last, K, tmp);
      C[i * ldc + j] = tmp[0];
    }
  }
}

// C[i0:i1, :] = A^T (A stored K x M) * B (K x N). Row i of C reads
// column i of A, which is contiguous within each A row.
inline void gemm_tn_block(int64_t i0, int64_t i1, int64_t N, int64_t K,
                          const double* A, int64_t lda, const double* B,
                          int64_t ldb, double* C, int64_t ldc) {
  for (int64_t i = i0; i < i1; i += kMR) {
    const int64_t mr = std::min(kMR, i1 - i);
    int64_t j = 0;
    for (; j + kNR <= N; j += kNR) {
      double acc[kMR][kNR] = {};
      for (int64_t k = 0; k < K; ++k) {
        const double* brow = B + k * ldb + j;
        const double* acol = A + k * lda + i;
        for (int64_t r = 0; r < kMR; ++r) {
          if (r >= mr) break;
          const double a = acol[r];
          for (int64_t c = 0; c < kNR; ++c) acc[r][c] += a * brow[c];
        }
      }
      for (int64_t r = 0; r < mr; ++r)
        for (int64_t c = 0; c < kNR; ++c) C[(i + r) * ldc + j + c] = acc[r][c];
    }
    if (j < N) {
      const int64_t nr = N - j;
      double acc[kMR][kNR] = {};
      for (int64_t k = 0; k < K; ++k) {
        const double* brow = B + k * ldb + j;
        const double* acol = A + k * lda + i;
        for (int64_t r = 0; r < mr; ++r) {
          const double a = acol[r];
          for (int64_t c = 0; c < nr; ++c) acc[r][c] += a * brow[c];
        }
      }
      for (int64_t r = 0; r < mr; ++r)
        for (int64_t c = 0; c < nr; ++c) C[(i + r) * ldc + j + c] = acc[r][c];
    }
  }
}

// exp(x) for x <= 0 via range reduction and a degree-13 Taylor core;
// relative error ~1e-15 on the ELU-relevant range. Underflow clamps to 0.
inline double exp_neg_scalar(double x) {
  if (x < -708.0) return 0.0;
  const double log2e = 1.4426950408889634074;
  const double ln2_hi = 6.93147180369123816490e-01;
  const double ln2_lo = 1.90821492927058770002e-10;
  const double n = std::nearbyint(x * log2e);
  const double r = (x - n * ln2_hi) - n * ln2_lo;
  double p = 1.0 / 6227020800.0;  // 1/13!
  p = p * r + 1.0 / 479001600.0;
  p = p * r + 1.0 / 39916800.0;
  p = p * r + 1.0 / 3628800.0;
  p = p * r + 1.0 / 362880.0;
  p = p * r + 1.0 / 40320.0;
  p = p * r + 1.0 / 5040.0;
  p = p * r + 1.0 / 720.0;
  p = p * r + 1.0 / 120.0;
  p = p * r + 1.0 / 24.0;
  p = p * r + 1.0 / 6.0;
  p = p * r + 0.5;
  p = p * r + 1.0;
  p = p * r + 1.0;
  const int64_t ni = static_cast<int64_t>(n);
  uint64_t bits = static_cast<uint64_t>(ni + 1023) << 52;
  double s;
  std::memcpy(&s, &bits, sizeof(s));
  return p * s;
}

// y = elu(x): x for x > 0, exp(x) - 1 otherwise.
inline void vec_elu(const double* x, double* y, int64_t n) {
  int64_t i = 0;
#if defined(__AVX512F__)
  const __m512d vlog2e = _mm512_set1_pd(1.4426950408889634074);
  const __m512d vln2hi = _mm512_set1_pd(6.93147180369123816490e-01);
  const __m512d vln2lo = _mm512_set1_pd(1.90821492927058770002e-10);
  const __m512d vone = _mm512_set1_pd(1.0);
  const __m512d vzero = _mm512_setzero_pd();
  const __m512d vmin = _mm512_set1_pd(-708.0);
  static const double kInvFact[12] = {
      1.0 / 6227020800.0, 1.0 / 479001600.0, 1.0 / 39916800.0, 1.0 / 3628800.0,
      1.0 / 362880.0,     1.0 / 40320.0,     1.0 / 5040.0,     1.0 / 720.0,
      1.0 / 120.0,        1.0 / 24.0,        1.0 / 6.0,        0.5};
  for (; i + 8 <= n; i += 8) {
    const __m512d vx = _mm512_loadu_pd(x + i);
    const __m512d xc = _mm512_max_pd(_mm512_min_pd(vx, vzero), vmin);
    const __m512d vn = _mm512_roundscale_pd(_mm512_mul_pd(xc, vlog2e),
                                            _MM_FROUND_TO_NEAREST_INT);
    __m512d r = _mm512_fnmadd_pd(vn, vln2hi, xc);
    r = _mm512_fnmadd_pd(vn, vln2lo, r);
    __m512d p = _mm512_set1_pd(kInvFact[0]);
    for (int t = 1; t < 12; ++t)
      p = _mm512_fmadd_pd(p, r, _mm512_set1_pd(kInvFact[t]));
    p = _mm512_fmadd_pd(p, r, vone);
    p = _mm512_fmadd_pd(p, r, vone);
    // 2^n via exponent-bit assembly; n lies in [-1021, 0] here.
    const __m512i n64 = _mm512_cvtepi32_epi64(_mm512_cvtpd_epi32(vn));
    const __m512i bits =
        _mm512_slli_epi64(_mm512_add_epi64(n64, _mm512_set1_epi64(1023)), 52);
    const __m512d s = _mm512_castsi512_pd(bits);
    const __m512d expx = _mm512_mul_pd(p, s);
    const __m512d elu_neg = _mm512_sub_pd(expx, vone);
    const __mmask8 pos = _mm512_cmp_pd_mask(vx, vzero, _CMP_GT_OQ);
    _mm512_storeu_pd(y + i, _mm512_mask_blend_pd(pos, elu_neg, vx));
  }
#endif
  for (; i < n; ++i) y[i] = x[i] > 0 ? x[i] : exp_neg_scalar(x[i]) - 1.0;
}

}  // namespace detail

// C (m x n) = op(A) * op(B) with explicit leading dimensions.
// op(A) is m x k, op(B) is k x n. C must not alias A or B.
inline void gemm_ld(bool ta, bool tb, int64_t m, int64_t n, int64_t k,
                    const double* A, int64_t lda, const double* B, int64_t ldb,
                    double* C, int64_t ldc) {
  const int64_t flops = 2 * m * n * k;
  auto block = [&](int64_t i0, int64_t i1) {
    if (!ta && !tb)
      detail::gemm_nn_block(i0, i1, n, k, A, lda, B, ldb, C, ldc);
    else if (!ta && tb)
      detail::gemm_nt_block(i0, i1, n, k, A, lda, B, ldb, C, ldc);
    else if (ta && !tb)
      detail::gemm_tn_block(i0, i1, n, k, A, lda, B, ldb, C, ldc);
    else {
      // tt: C = A^T B^T = (B A)^T; rare and small in practice.
      for (int64_t i = i0; i < i1; ++i)
        for (int64_t j = 0; j < n; ++j) {
          double s = 0;
          for (int64_t kk = 0; kk < k; ++kk) s += A[kk * lda + i] * B[j * ldb + kk];
          C[i * ldc + j] = s;
        }
    }
  };
  if (flops < (1 << 18) || WorkerPool::instance().size() == 1) {
    block(0, m);
  } else {
    WorkerPool::instance().parallel_for(m, block);
  }
}

// Contiguous row-major convenience wrapper.
inline void gemm(bool ta, bool tb, int64_t m, int64_t n, int64_t k,
                 const double* A, const double* B, double* C) {
  gemm_ld(ta, tb, m, n, k, A, ta ? m : k, B, tb ? k : n, C, n);
}

// Runs an elementwise kernel over [0, n), threading when large enough.
template <typename F>
inline void elementwise(int64_t n, F&& fn) {
  if (n < (1 << 17) || WorkerPool::instance().size() == 1) {
    fn(static_cast<int64_t>(0), n);
  } else {
    WorkerPool::instance().parallel_for(n, fn);
  }
}

}  // namespace ganlab
