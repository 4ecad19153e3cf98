#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace headscope {

/// Fisher-Pearson g1 = m3 / m2^(3/2) with population moments.
double skewness(std::span<const double> values);

struct KsResult {
  double d = 0.0;
  double p = 1.0;
};

/// Two-sample Kolmogorov-Smirnov test; p from the asymptotic Kolmogorov
/// distribution at sqrt(nm / (n + m)) * D.
KsResult ks_two_sample(std::span<const double> a, std::span<const double> b);

/// Survival function of the Kolmogorov distribution, P(K > x), in (0, 1].
double kolmogorov_sf(double x);

double mean(std::span<const double> values);

struct ScoreDistribution {
  std::string label;
  std::vector<double> values;
  double mean = 0.0;
  /// Absent when fewer than 3 values or zero variance.
  std::optional<double> skewness;

  static ScoreDistribution from_values(std::string label, std::vector<double> values);
};

struct BaselineComparison {
  std::string primary_label;
  std::string baseline_label;
  double mean_difference = 0.0;
  std::optional<double> skewness_difference;
  KsResult ks;
};

BaselineComparison compare_to_baseline(const ScoreDistribution& primary, const ScoreDistribution& baseline);

struct Histogram {
  double lo = 0.0;
  double hi = 1.0;
  double bin_width = 0.05;
  std::vector<std::size_t> counts;
};

/// Fixed-width bins over [lo, hi]; the last bin is closed on the right and
/// values outside the range are clamped into the edge bins.
Histogram make_histogram(std::span<const double> values, double lo = 0.0, double hi = 1.0, double bin_width = 0.05);

/// "bin_start,bin_end,count" rows with a header line.
std::string histogram_csv(const Histogram& h);

}  // namespace headscope
