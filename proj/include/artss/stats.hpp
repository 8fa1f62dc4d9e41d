#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace artss::stats {

double mean(std::span<const double> values);
// Linear-interpolated quantile (type 7) of an unsorted sample, q in [0, 1].
double quantile(std::vector<double> values, double q);
double median(std::vector<double> values);
double iqr(std::vector<double> values);

struct Interval {
    double lower;
    double upper;
};

// Wilson score interval for `successes` out of `trials` at z = 1.959964 (95%).
Interval wilson_interval(std::size_t successes, std::size_t trials, double z = 1.959963984540054);

}  // namespace artss::stats
