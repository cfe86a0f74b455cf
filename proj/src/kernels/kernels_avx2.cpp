// AVX2 kernels. This translation unit is compiled with -mavx2 -mfma and is
// only reached after a runtime CPU check.

#include "tables.hpp"

#include <immintrin.h>

#include <cmath>

namespace splatctl::kernels {
namespace {

// exp(x) for x in double lanes: Cody-Waite reduction by ln2 and a degree-13
// Taylor polynomial on |r| <= ln2/2 (truncation < 2e-16 relative). Inputs
// below -708 flush to zero instead of producing subnormals.
inline __m256d exp_pd(__m256d x) {
    const __m256d lo = _mm256_set1_pd(-708.0);
    const __m256d hi = _mm256_set1_pd(709.0);
    const __m256d underflow = _mm256_cmp_pd(x, lo, _CMP_LT_OQ);
    x = _mm256_min_pd(_mm256_max_pd(x, lo), hi);

    const __m256d n = _mm256_round_pd(_mm256_mul_pd(x, _mm256_set1_pd(1.4426950408889634)),
                                      _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
    __m256d r = _mm256_fnmadd_pd(n, _mm256_set1_pd(0.693145751953125), x);
    r = _mm256_fnmadd_pd(n, _mm256_set1_pd(1.42860682030941723212e-6), r);

    __m256d p = _mm256_set1_pd(1.0 / 6227020800.0);
    p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 479001600.0));
    p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 39916800.0));
    p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 3628800.0));
    p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 362880.0));
    p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 40320.0));
    p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 5040.0));
    p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 720.0));
    p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 120.0));
    p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 24.0));
    p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 6.0));
    p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(0.5));
    p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0));
    p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0));

    // 2^n via the exponent field; the magic constant leaves n in the low bits.
    const __m256d magic = _mm256_set1_pd(6755399441055744.0);
    __m256i bits = _mm256_castpd_si256(_mm256_add_pd(n, magic));
    bits = _mm256_add_epi64(bits, _mm256_set1_epi64x(1023));
    bits = _mm256_slli_epi64(bits, 52);
    const __m256d result = _mm256_mul_pd(p, _mm256_castsi256_pd(bits));
    return _mm256_andnot_pd(underflow, result);
}

inline double hsum(__m256d v) {
    const __m128d lo = _mm256_castpd256_pd128(v);
    const __m128d hi = _mm256_extractf128_pd(v, 1);
    const double a = _mm_cvtsd_f64(lo) + _mm_cvtsd_f64(_mm_unpackhi_pd(lo, lo));
    const double b = _mm_cvtsd_f64(hi) + _mm_cvtsd_f64(_mm_unpackhi_pd(hi, hi));
    return a + b;
}

void gaussian_profile_avx2(const double* d, std::size_t n, double c, double* out) {
    const __m256d negc = _mm256_set1_pd(-c);
    std::size_t k = 0;
    for (; k + 4 <= n; k += 4) {
        const __m256d dv = _mm256_loadu_pd(d + k);
        _mm256_storeu_pd(out + k, exp_pd(_mm256_mul_pd(_mm256_mul_pd(dv, dv), negc)));
    }
    if (k < n) {
        alignas(32) double tmp_in[4] = {0.0, 0.0, 0.0, 0.0};
        alignas(32) double tmp_out[4];
        for (std::size_t j = k; j < n; ++j) tmp_in[j - k] = d[j];
        const __m256d dv = _mm256_load_pd(tmp_in);
        _mm256_store_pd(tmp_out, exp_pd(_mm256_mul_pd(_mm256_mul_pd(dv, dv), negc)));
        for (std::size_t j = k; j < n; ++j) out[j] = tmp_out[j - k];
    }
}

void axpy_avx2(double* y, const double* x, std::size_t n, double a) {
    const __m256d av = _mm256_set1_pd(a);
    std::size_t k = 0;
    for (; k + 4 <= n; k += 4) {
        const __m256d prod = _mm256_mul_pd(av, _mm256_loadu_pd(x + k));
        _mm256_storeu_pd(y + k, _mm256_add_pd(_mm256_loadu_pd(y + k), prod));
    }
    for (; k < n; ++k) {
        y[k] += a * x[k];
    }
}

RowSums row_moments_avx2(const double* r, const double* w, const double* d, std::size_t n) {
    __m256d sw = _mm256_setzero_pd();
    __m256d swd = _mm256_setzero_pd();
    __m256d swdd = _mm256_setzero_pd();
    std::size_t k = 0;
    for (; k + 4 <= n; k += 4) {
        const __m256d rw = _mm256_mul_pd(_mm256_loadu_pd(r + k), _mm256_loadu_pd(w + k));
        const __m256d dv = _mm256_loadu_pd(d + k);
        const __m256d rwd = _mm256_mul_pd(rw, dv);
        sw = _mm256_add_pd(sw, rw);
        swd = _mm256_add_pd(swd, rwd);
        swdd = _mm256_fmadd_pd(rwd, dv, swdd);
    }
    RowSums s{hsum(sw), hsum(swd), hsum(swdd)};
    for (; k < n; ++k) {
        const double rw = r[k] * w[k];
        const double rwd = rw * d[k];
        s.w += rw;
        s.wd += rwd;
        s.wdd += rwd * d[k];
    }
    return s;
}

// No FMA here: the result must match the scalar reference bit for bit.
void ema_update_avx2(double* m, double* v, const double* g, std::size_t n, double b1,
                     double b2) {
    const __m256d vb1 = _mm256_set1_pd(b1);
    const __m256d vb2 = _mm256_set1_pd(b2);
    const __m256d vc1 = _mm256_set1_pd(1.0 - b1);
    const __m256d vc2 = _mm256_set1_pd(1.0 - b2);
    std::size_t k = 0;
    for (; k + 4 <= n; k += 4) {
        const __m256d gv = _mm256_loadu_pd(g + k);
        const __m256d mv = _mm256_add_pd(_mm256_mul_pd(vb1, _mm256_loadu_pd(m + k)),
                                         _mm256_mul_pd(vc1, gv));
        const __m256d vv = _mm256_add_pd(_mm256_mul_pd(vb2, _mm256_loadu_pd(v + k)),
                                         _mm256_mul_pd(vc2, _mm256_mul_pd(gv, gv)));
        _mm256_storeu_pd(m + k, mv);
        _mm256_storeu_pd(v + k, vv);
    }
    const double c1 = 1.0 - b1;
    const double c2 = 1.0 - b2;
    for (; k < n; ++k) {
        const double gk = g[k];
        m[k] = b1 * m[k] + c1 * gk;
        v[k] = b2 * v[k] + c2 * (gk * gk);
    }
}

} // namespace

const KernelTable kAvx2Table{
    "avx2", gaussian_profile_avx2, axpy_avx2, row_moments_avx2, ema_update_avx2,
};

} // namespace splatctl::kernels
