/// @file kernels.hpp
/// @brief Data-parallel inner loops with a scalar reference implementation
///        and an AVX2 variant chosen at runtime.
///
/// Every variant must agree with the scalar reference to within the
/// tolerances checked in tests/test_kernels.cpp. `ema_update` and `axpy`
/// are bit-identical across variants; `gaussian_profile` and `row_moments`
/// differ in the last few ulps (polynomial exp, lane-wise partial sums).

#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace splatctl::kernels {

struct RowSums {
    double w = 0.0;   ///< sum r*w
    double wd = 0.0;  ///< sum r*w*d
    double wdd = 0.0; ///< sum r*w*d*d
};

struct KernelTable {
    const char* name;

    /// out[k] = exp(-d[k]^2 * c)
    void (*gaussian_profile)(const double* d, std::size_t n, double c, double* out);

    /// y[k] += a * x[k]
    void (*axpy)(double* y, const double* x, std::size_t n, double a);

    /// Weighted sums of a residual row against a separable footprint row.
    RowSums (*row_moments)(const double* r, const double* w, const double* d, std::size_t n);

    /// m = b1*m + (1-b1)*g ; v = b2*v + (1-b2)*g*g over n doubles.
    void (*ema_update)(double* m, double* v, const double* g, std::size_t n, double b1,
                       double b2);
};

enum class Isa { kScalar, kAvx2 };

std::string to_string(Isa isa);

/// Parses "scalar", "avx2" or "auto" (nullopt).
std::optional<Isa> parse_isa(const std::string& name);

bool isa_supported(Isa isa);

/// Most capable variant the CPU and the build support.
Isa best_isa();

/// Throws ConfigError if `isa` is not supported here.
const KernelTable& table(Isa isa);

/// Variant for an optional request; nullopt resolves to best_isa(), unless
/// the SPLATCTL_ISA environment variable names one.
const KernelTable& select(std::optional<Isa> requested);

std::vector<Isa> available_isas();

} // namespace splatctl::kernels
