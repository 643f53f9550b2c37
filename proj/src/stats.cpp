#include "fedkseed/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "fedkseed/error.hpp"

namespace fedkseed::stats {

double mean(std::span<const double> v) {
  if (v.empty()) throw ContractViolation("mean of an empty sample");
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double stddev(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

PairedTest paired_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) {
    throw ContractViolation("paired t-test needs two equal samples of size >= 2");
  }
  std::vector<double> diff(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) diff[i] = a[i] - b[i];
  PairedTest out;
  out.mean_difference = mean(diff);
  const double se = stddev(diff) / std::sqrt(static_cast<double>(diff.size()));
  if (se == 0.0) {
    // Degenerate: all differences equal.
    const double inf = std::numeric_limits<double>::infinity();
    out.t_statistic = out.mean_difference == 0.0 ? 0.0 : std::copysign(inf, out.mean_difference);
    out.p_value_less = out.mean_difference < 0.0 ? 0.0 : 1.0;
    out.p_value_greater = out.mean_difference > 0.0 ? 0.0 : 1.0;
    if (out.mean_difference == 0.0) out.p_value_less = out.p_value_greater = 0.5;
    return out;
  }
  out.t_statistic = out.mean_difference / se;
  const boost::math::students_t dist(static_cast<double>(diff.size() - 1));
  out.p_value_less = boost::math::cdf(dist, out.t_statistic);
  out.p_value_greater = boost::math::cdf(boost::math::complement(dist, out.t_statistic));
  return out;
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double ks_statistic_normal(std::span<const double> sample) {
  if (sample.empty()) throw ContractViolation("KS test of an empty sample");
  std::vector<double> s(sample.begin(), sample.end());
  std::sort(s.begin(), s.end());
  const auto n = static_cast<double>(s.size());
  double d = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double f = normal_cdf(s[i]);
    d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
  }
  return d;
}

double ks_statistic_two_sample(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw ContractViolation("KS test of an empty sample");
  std::vector<double> x(a.begin(), a.end());
  std::vector<double> y(b.begin(), b.end());
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  std::size_t i = 0;
  std::size_t j = 0;
  double d = 0.0;
  while (i < x.size() && j < y.size()) {
    const double v = std::min(x[i], y[j]);
    while (i < x.size() && x[i] == v) ++i;
    while (j < y.size() && y[j] == v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / static_cast<double>(x.size()) -
                             static_cast<double>(j) / static_cast<double>(y.size())));
  }
  return d;
}

double ks_critical_one_sample(std::size_t n, double alpha) {
  return std::sqrt(-std::log(alpha / 2.0) / 2.0) / std::sqrt(static_cast<double>(n));
}

double ks_critical_two_sample(std::size_t n, std::size_t m, double alpha) {
  const double c = std::sqrt(-std::log(alpha / 2.0) / 2.0);
  const auto nn = static_cast<double>(n);
  const auto mm = static_cast<double>(m);
  return c * std::sqrt((nn + mm) / (nn * mm));
}

}  // namespace fedkseed::stats
