#pragma once

// Small statistics toolbox for the seeded experiments.

#include <cstddef>
#include <span>

namespace fedkseed::stats {

double mean(std::span<const double> v);
// Sample standard deviation (n - 1 denominator); 0 for fewer than 2 values.
double stddev(std::span<const double> v);

struct PairedTest {
  double mean_difference = 0.0;  // mean of (a - b)
  double t_statistic = 0.0;
  // P(T <= t) under H0: E[a - b] = 0, i.e. the p-value for H1: E[a] < E[b].
  double p_value_less = 1.0;
  // p-value for H1: E[a] > E[b].
  double p_value_greater = 1.0;
};

// Student paired t-test on (a_i - b_i). Needs at least two pairs.
PairedTest paired_t_test(std::span<const double> a, std::span<const double> b);

// Kolmogorov-Smirnov statistic of a sample against N(0, 1).
double ks_statistic_normal(std::span<const double> sample);

// Two-sample Kolmogorov-Smirnov statistic.
double ks_statistic_two_sample(std::span<const double> a, std::span<const double> b);

// Asymptotic one-sample KS critical value sqrt(-ln(alpha / 2) / 2) / sqrt(n).
double ks_critical_one_sample(std::size_t n, double alpha);

// Asymptotic two-sample critical value c(alpha) * sqrt((n + m) / (n m)).
double ks_critical_two_sample(std::size_t n, std::size_t m, double alpha);

// Standard normal CDF.
double normal_cdf(double x);

}  // namespace fedkseed::stats
