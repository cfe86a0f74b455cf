#pragma once

#include <span>

namespace splatctl {

/// Quantile by linear interpolation between the closest order statistics
/// (the "type 7" rule): h = (n-1)p, Q = x[floor h] + frac(h)(x[floor h + 1] - x[floor h]).
///
/// `level` must lie in [0,1] and `values` must be non-empty; a single value
/// is its own quantile. NaNs are not allowed.
double quantile_linear(std::span<const double> values, double level);

} // namespace splatctl
