#include "artss/stats.hpp"

#include <algorithm>
#include <cmath>

#include "artss/error.hpp"

namespace artss::stats {

double mean(std::span<const double> values) {
    if (values.empty()) fail(ErrorCode::EmptyData, "mean of empty sample");
    double sum = 0.0;
    for (double v : values) sum += v;
    return sum / static_cast<double>(values.size());
}

double quantile(std::vector<double> values, double q) {
    if (values.empty()) fail(ErrorCode::EmptyData, "quantile of empty sample");
    std::sort(values.begin(), values.end());
    const double pos = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return values[lo] + frac * (values[hi] - values[lo]);
}

double median(std::vector<double> values) { return quantile(std::move(values), 0.5); }

double iqr(std::vector<double> values) {
    return quantile(values, 0.75) - quantile(values, 0.25);
}

Interval wilson_interval(std::size_t successes, std::size_t trials, double z) {
    if (trials == 0) fail(ErrorCode::InvalidArgument, "Wilson interval needs >= 1 trial");
    const double n = static_cast<double>(trials);
    const double p = static_cast<double>(successes) / n;
    const double z2 = z * z;
    const double denom = 1.0 + z2 / n;
    const double center = (p + z2 / (2.0 * n)) / denom;
    const double half = z * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / denom;
    return Interval{std::max(0.0, center - half), std::min(1.0, center + half)};
}

}  // namespace artss::stats
