#include "splatctl/quantile.hpp"

#include "splatctl/error.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace splatctl {

double quantile_linear(std::span<const double> values, double level) {
    if (values.empty()) throw Error("quantile of an empty population");
    if (!(level >= 0.0 && level <= 1.0)) throw Error("quantile level must lie in [0,1]");

    std::vector<double> work(values.begin(), values.end());
    const double h = static_cast<double>(work.size() - 1) * level;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const double frac = h - static_cast<double>(lo);

    std::nth_element(work.begin(), work.begin() + static_cast<std::ptrdiff_t>(lo), work.end());
    const double x_lo = work[lo];
    if (lo + 1 >= work.size() || frac == 0.0) return x_lo;
    // The (lo+1)-th order statistic is the minimum of the upper partition.
    const double x_hi = *std::min_element(work.begin() + static_cast<std::ptrdiff_t>(lo) + 1, work.end());
    return x_lo + frac * (x_hi - x_lo);
}

} // namespace splatctl
