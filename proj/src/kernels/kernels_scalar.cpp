// Scalar reference kernels. Compiled without ISA extension flags so the
// results are the baseline every other variant is checked against.

#include "tables.hpp"

#include <cmath>

namespace splatctl::kernels {
namespace {

void gaussian_profile_scalar(const double* d, std::size_t n, double c, double* out) {
    for (std::size_t k = 0; k < n; ++k) {
        out[k] = std::exp(-(d[k] * d[k]) * c);
    }
}

void axpy_scalar(double* y, const double* x, std::size_t n, double a) {
    for (std::size_t k = 0; k < n; ++k) {
        y[k] += a * x[k];
    }
}

RowSums row_moments_scalar(const double* r, const double* w, const double* d, std::size_t n) {
    RowSums s;
    for (std::size_t k = 0; k < n; ++k) {
        const double rw = r[k] * w[k];
        const double rwd = rw * d[k];
        s.w += rw;
        s.wd += rwd;
        s.wdd += rwd * d[k];
    }
    return s;
}

void ema_update_scalar(double* m, double* v, const double* g, std::size_t n, double b1,
                       double b2) {
    const double c1 = 1.0 - b1;
    const double c2 = 1.0 - b2;
    for (std::size_t k = 0; k < n; ++k) {
        const double gk = g[k];
        m[k] = b1 * m[k] + c1 * gk;
        v[k] = b2 * v[k] + c2 * (gk * gk);
    }
}

} // namespace

const KernelTable kScalarTable{
    "scalar", gaussian_profile_scalar, axpy_scalar, row_moments_scalar, ema_update_scalar,
};

} // namespace splatctl::kernels
