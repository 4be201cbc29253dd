#pragma once

#include <cmath>
#include <cstddef>
#include <cstring>
#include <vector>

namespace oplab {

// Dense row-major matrix of 64-bit reals. The single numeric container used
// for network weights, activations, sensor readings, and snapshot ensembles.
struct RealMatrix {
    long rows = 0;
    long cols = 0;
    std::vector<double> data;

    RealMatrix() = default;
    RealMatrix(long r, long c, double fill = 0.0)
        : rows(r), cols(c), data(static_cast<std::size_t>(r) * static_cast<std::size_t>(c), fill) {}

    double& at(long i, long j) { return data[static_cast<std::size_t>(i) * cols + j]; }
    double at(long i, long j) const { return data[static_cast<std::size_t>(i) * cols + j]; }
    double* row(long i) { return data.data() + static_cast<std::size_t>(i) * cols; }
    const double* row(long i) const { return data.data() + static_cast<std::size_t>(i) * cols; }
    std::size_t size() const { return data.size(); }

    // Reshape without shrinking capacity; contents are unspecified afterwards.
    void resize(long r, long c) {
        rows = r;
        cols = c;
        data.resize(static_cast<std::size_t>(r) * static_cast<std::size_t>(c));
    }

    bool all_finite() const;
    void fill(double v);
};

bool same_shape(const RealMatrix& a, const RealMatrix& b);

// C += A * B. Deterministic for any thread count: each output row is owned by
// one thread and accumulated in fixed k order.
void mm_add(const RealMatrix& a, const RealMatrix& b, RealMatrix& c);

// C = A * B.
RealMatrix matmul(const RealMatrix& a, const RealMatrix& b);

// C += A^T * B with A [r x m], B [r x n], C [m x n]. Fixed-size row blocks are
// reduced in index order, so results do not depend on the thread count.
void mm_at_b_add(const RealMatrix& a, const RealMatrix& b, RealMatrix& c);

RealMatrix transpose(const RealMatrix& a);

// out[j] += sum_i a(i, j)
void col_sums_add(const RealMatrix& a, std::vector<double>& out);

bool finite_array(const double* p, std::size_t n);

namespace detail {

// Cephes-style exp: range reduce by log2(e), rational approximation on the
// remainder, scale by 2^n through the exponent bits. Accurate to ~1 ulp over
// the tanh-relevant range; inline so elementwise loops vectorize.
inline double fast_exp(double x) {
    const double kLog2e = 1.4426950408889634074;
    const double kC1 = 6.93145751953125e-1;
    const double kC2 = 1.42860682030941723212e-6;
    double px = std::floor(kLog2e * x + 0.5);
    const long long n = static_cast<long long>(px);
    x -= px * kC1;
    x -= px * kC2;
    const double xx = x * x;
    const double p =
        x * (xx * (xx * 1.26177193074810590878e-4 + 3.02994407707441961300e-2) +
             9.99999999999999999910e-1);
    const double q =
        xx * (xx * (xx * 3.00198505138664455042e-6 + 2.52448340349684104192e-3) +
              2.27265548208155028766e-1) +
        2.00000000000000000005e0;
    double e = 1.0 + 2.0 * (p / (q - p));
    long long bits;
    std::memcpy(&bits, &e, sizeof(bits));
    bits += n << 52;
    std::memcpy(&e, &bits, sizeof(bits));
    return e;
}

}  // namespace detail

// Elementwise tanh within a few ulp of std::tanh; the libm call is an order of
// magnitude slower and would dominate training time. Saturation is handled by
// clamping (tanh rounds to +-1.0 beyond |x| = 19 in double precision), which
// keeps the body branch-free so elementwise loops vectorize.
inline double fast_tanh(double x) {
    const double xc = x > 19.0 ? 19.0 : (x < -19.0 ? -19.0 : x);
    const double e = detail::fast_exp(2.0 * xc);
    return (e - 1.0) / (e + 1.0);
}

void tanh_inplace(RealMatrix& a);

// g *= (1 - a*a), the tanh backward rule given stored activations a.
void tanh_backward_inplace(const RealMatrix& activations, RealMatrix& g);

}  // namespace oplab
