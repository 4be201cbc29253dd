#include "oplab/matrix.hpp"

#include <algorithm>
#include <cmath>

#include "oplab/errors.hpp"

#ifdef __AVX512F__
#include <immintrin.h>
#endif

namespace oplab {

bool finite_array(const double* p, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(p[i])) return false;
    }
    return true;
}

bool RealMatrix::all_finite() const { return finite_array(data.data(), data.size()); }

void RealMatrix::fill(double v) { std::fill(data.begin(), data.end(), v); }

bool same_shape(const RealMatrix& a, const RealMatrix& b) {
    return a.rows == b.rows && a.cols == b.cols;
}

namespace {

#ifdef __AVX512F__
// 4x16 register-blocked panel: C[ib..ib+mi) x [j..j+16) accumulated over all k.
void mm_add_rows(const double* a, const double* b, double* c, long i0, long i1, long k_dim,
                 long n) {
    for (long ib = i0; ib < i1; ib += 4) {
        const long mi = (ib + 4 <= i1) ? 4 : i1 - ib;
        long j = 0;
        for (; j + 16 <= n; j += 16) {
            __m512d acc[4][2];
            for (long r = 0; r < mi; ++r) {
                acc[r][0] = _mm512_loadu_pd(c + static_cast<std::size_t>(ib + r) * n + j);
                acc[r][1] = _mm512_loadu_pd(c + static_cast<std::size_t>(ib + r) * n + j + 8);
            }
            for (long k = 0; k < k_dim; ++k) {
                const __m512d b0 = _mm512_loadu_pd(b + static_cast<std::size_t>(k) * n + j);
                const __m512d b1 = _mm512_loadu_pd(b + static_cast<std::size_t>(k) * n + j + 8);
                for (long r = 0; r < mi; ++r) {
                    const __m512d av =
                        _mm512_set1_pd(a[static_cast<std::size_t>(ib + r) * k_dim + k]);
                    acc[r][0] = _mm512_fmadd_pd(av, b0, acc[r][0]);
                    acc[r][1] = _mm512_fmadd_pd(av, b1, acc[r][1]);
                }
            }
            for (long r = 0; r < mi; ++r) {
                _mm512_storeu_pd(c + static_cast<std::size_t>(ib + r) * n + j, acc[r][0]);
                _mm512_storeu_pd(c + static_cast<std::size_t>(ib + r) * n + j + 8, acc[r][1]);
            }
        }
        for (; j < n; ++j) {
            for (long r = 0; r < mi; ++r) {
                double s = c[static_cast<std::size_t>(ib + r) * n + j];
                const double* ar = a + static_cast<std::size_t>(ib + r) * k_dim;
                for (long k = 0; k < k_dim; ++k)
                    s += ar[k] * b[static_cast<std::size_t>(k) * n + j];
                c[static_cast<std::size_t>(ib + r) * n + j] = s;
            }
        }
    }
}
#else
void mm_add_rows(const double* a, const double* b, double* c, long i0, long i1, long k_dim,
                 long n) {
    for (long i = i0; i < i1; ++i) {
        const double* ar = a + static_cast<std::size_t>(i) * k_dim;
        double* cr = c + static_cast<std::size_t>(i) * n;
        long k = 0;
        for (; k + 4 <= k_dim; k += 4) {
            const double a0 = ar[k], a1 = ar[k + 1], a2 = ar[k + 2], a3 = ar[k + 3];
            const double* b0 = b + static_cast<std::size_t>(k) * n;
            const double* b1 = b0 + n;
            const double* b2 = b1 + n;
            const double* b3 = b2 + n;
            for (long j = 0; j < n; ++j) cr[j] += a0 * b0[j] + a1 * b1[j] + a2 * b2[j] + a3 * b3[j];
        }
        for (; k < k_dim; ++k) {
            const double ak = ar[k];
            const double* br = b + static_cast<std::size_t>(k) * n;
            for (long j = 0; j < n; ++j) cr[j] += ak * br[j];
        }
    }
}
#endif

}  // namespace

void mm_add(const RealMatrix& a, const RealMatrix& b, RealMatrix& c) {
    if (a.cols != b.rows || c.rows != a.rows || c.cols != b.cols)
        throw ShapeError("mm_add: incompatible shapes");
    const long m = a.rows, k = a.cols, n = b.cols;
#pragma omp parallel for schedule(static)
    for (long i0 = 0; i0 < m; i0 += 64) {
        const long i1 = (i0 + 64 <= m) ? i0 + 64 : m;
        mm_add_rows(a.data.data(), b.data.data(), c.data.data(), i0, i1, k, n);
    }
}

RealMatrix matmul(const RealMatrix& a, const RealMatrix& b) {
    RealMatrix c(a.rows, b.cols, 0.0);
    mm_add(a, b, c);
    return c;
}

namespace {

constexpr long kReduceBlock = 512;  // keeps both operand blocks L2-resident

// partial[m x n] += A_block^T * B_block over rows [r0, r1).
#ifdef __AVX512F__
void at_b_block(const RealMatrix& a, const RealMatrix& b, long r0, long r1, double* partial) {
    const long m = a.cols, n = b.cols;
    const double* ad = a.data.data();
    const double* bd = b.data.data();
    for (long o0 = 0; o0 < m; o0 += 8) {
        const long mo = (o0 + 8 <= m) ? 8 : m - o0;
        long j = 0;
        for (; j + 16 <= n; j += 16) {
            __m512d acc[8][2];
            for (long t = 0; t < mo; ++t) {
                acc[t][0] = _mm512_loadu_pd(partial + static_cast<std::size_t>(o0 + t) * n + j);
                acc[t][1] = _mm512_loadu_pd(partial + static_cast<std::size_t>(o0 + t) * n + j + 8);
            }
            for (long r = r0; r < r1; ++r) {
                const __m512d b0 = _mm512_loadu_pd(bd + static_cast<std::size_t>(r) * n + j);
                const __m512d b1 = _mm512_loadu_pd(bd + static_cast<std::size_t>(r) * n + j + 8);
                const double* ar = ad + static_cast<std::size_t>(r) * m + o0;
                for (long t = 0; t < mo; ++t) {
                    const __m512d av = _mm512_set1_pd(ar[t]);
                    acc[t][0] = _mm512_fmadd_pd(av, b0, acc[t][0]);
                    acc[t][1] = _mm512_fmadd_pd(av, b1, acc[t][1]);
                }
            }
            for (long t = 0; t < mo; ++t) {
                _mm512_storeu_pd(partial + static_cast<std::size_t>(o0 + t) * n + j, acc[t][0]);
                _mm512_storeu_pd(partial + static_cast<std::size_t>(o0 + t) * n + j + 8, acc[t][1]);
            }
        }
        for (; j < n; ++j) {
            for (long t = 0; t < mo; ++t) {
                double s = partial[static_cast<std::size_t>(o0 + t) * n + j];
                for (long r = r0; r < r1; ++r)
                    s += ad[static_cast<std::size_t>(r) * m + o0 + t] *
                         bd[static_cast<std::size_t>(r) * n + j];
                partial[static_cast<std::size_t>(o0 + t) * n + j] = s;
            }
        }
    }
}
#else
void at_b_block(const RealMatrix& a, const RealMatrix& b, long r0, long r1, double* partial) {
    const long m = a.cols, n = b.cols;
    constexpr long kTile = 8;
    for (long o0 = 0; o0 < m; o0 += kTile) {
        const long o1 = std::min(o0 + kTile, m);
        for (long r = r0; r < r1; ++r) {
            const double* ar = a.row(r);
            const double* br = b.row(r);
            for (long o = o0; o < o1; ++o) {
                const double av = ar[o];
                double* pr = partial + static_cast<std::size_t>(o) * n;
                for (long j = 0; j < n; ++j) pr[j] += av * br[j];
            }
        }
    }
}
#endif

}  // namespace

void mm_at_b_add(const RealMatrix& a, const RealMatrix& b, RealMatrix& c) {
    if (a.rows != b.rows || c.rows != a.cols || c.cols != b.cols)
        throw ShapeError("mm_at_b_add: incompatible shapes");
    const long r = a.rows, m = a.cols, n = b.cols;
    const long n_blocks = (r + kReduceBlock - 1) / kReduceBlock;
    if (n_blocks <= 1) {
        at_b_block(a, b, 0, r, c.data.data());
        return;
    }
    // Per-block partials computed in parallel, reduced in block order; the
    // result is independent of the thread count.
    static thread_local std::vector<double> partials;
    partials.assign(static_cast<std::size_t>(n_blocks) * m * n, 0.0);
    double* base = partials.data();
#pragma omp parallel for schedule(static)
    for (long blk = 0; blk < n_blocks; ++blk) {
        const long r0 = blk * kReduceBlock;
        const long r1 = std::min(r0 + kReduceBlock, r);
        at_b_block(a, b, r0, r1, base + static_cast<std::size_t>(blk) * m * n);
    }
    for (long blk = 0; blk < n_blocks; ++blk) {
        const double* p = base + static_cast<std::size_t>(blk) * m * n;
        double* out = c.data.data();
        for (std::size_t i = 0; i < static_cast<std::size_t>(m) * n; ++i) out[i] += p[i];
    }
}

RealMatrix transpose(const RealMatrix& a) {
    RealMatrix t(a.cols, a.rows);
    for (long i = 0; i < a.rows; ++i)
        for (long j = 0; j < a.cols; ++j) t.at(j, i) = a.at(i, j);
    return t;
}

void col_sums_add(const RealMatrix& a, std::vector<double>& out) {
    if (static_cast<long>(out.size()) != a.cols) throw ShapeError("col_sums_add: size mismatch");
    for (long i = 0; i < a.rows; ++i) {
        const double* r = a.row(i);
        for (long j = 0; j < a.cols; ++j) out[j] += r[j];
    }
}

void tanh_inplace(RealMatrix& a) {
    double* p = a.data.data();
    const long long n = static_cast<long long>(a.size());
#pragma omp parallel for schedule(static)
    for (long long i = 0; i < n; ++i) p[i] = fast_tanh(p[i]);
}

void tanh_backward_inplace(const RealMatrix& activations, RealMatrix& g) {
    if (!same_shape(activations, g)) throw ShapeError("tanh_backward: shape mismatch");
    const double* a = activations.data.data();
    double* p = g.data.data();
    const long long n = static_cast<long long>(g.size());
#pragma omp parallel for schedule(static)
    for (long long i = 0; i < n; ++i) p[i] *= 1.0 - a[i] * a[i];
}

}  // namespace oplab
