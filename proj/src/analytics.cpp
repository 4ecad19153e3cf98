#include "headscope/analytics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "headscope/errors.hpp"

namespace headscope {

double mean(std::span<const double> values) {
  if (values.empty()) throw Error(ErrorCode::EmptySample, "mean of an empty sample");
  double sum = 0.0;
  for (double v : values) sum += v;
  return sum / static_cast<double>(values.size());
}

double skewness(std::span<const double> values) {
  if (values.size() < 3) throw Error(ErrorCode::TooFewSamples, "skewness needs at least 3 values");
  const double mu = mean(values);
  double m2 = 0.0;
  double m3 = 0.0;
  for (double v : values) {
    const double c = v - mu;
    m2 += c * c;
    m3 += c * c * c;
  }
  const auto n = static_cast<double>(values.size());
  m2 /= n;
  m3 /= n;
  // Relative cut-off so that constant samples with rounding residue count as degenerate.
  if (m2 <= std::pow(std::numeric_limits<double>::epsilon() * std::max(1.0, std::fabs(mu)), 2) * 10.0) {
    throw Error(ErrorCode::DegenerateVariance, "skewness of a sample with zero variance");
  }
  return m3 / std::pow(m2, 1.5);
}

double kolmogorov_sf(double x) {
  if (!(x > 0.0)) return 1.0;
  double p;
  if (x < 1.0) {
    // Complementary series: P(K <= x) = sqrt(2 pi)/x * sum exp(-(2k-1)^2 pi^2 / (8 x^2)).
    double cdf = 0.0;
    const double w = std::numbers::pi * std::numbers::pi / (8.0 * x * x);
    for (int k = 1; k <= 50; ++k) {
      const double term = std::exp(-(2.0 * k - 1.0) * (2.0 * k - 1.0) * w);
      cdf += term;
      if (term < 1e-300) break;
    }
    cdf *= std::sqrt(2.0 * std::numbers::pi) / x;
    p = 1.0 - cdf;
  } else {
    p = 0.0;
    for (int k = 1; k <= 100; ++k) {
      const double term = std::exp(-2.0 * k * k * x * x);
      p += (k % 2 == 1 ? 2.0 : -2.0) * term;
      if (term < 1e-300) break;
    }
  }
  return std::clamp(p, std::numeric_limits<double>::min(), 1.0);
}

KsResult ks_two_sample(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw Error(ErrorCode::EmptySample, "KS test needs two nonempty samples");
  std::vector<double> sa(a.begin(), a.end());
  std::vector<double> sb(b.begin(), b.end());
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  const auto n = static_cast<double>(sa.size());
  const auto m = static_cast<double>(sb.size());
  // ECDF differences at every observed value, evaluated as i/n - j/m.
  double max_diff = 0.0;
  double min_diff = 0.0;
  std::size_t i = 0;
  std::size_t j = 0;
  while (i < sa.size() || j < sb.size()) {
    double x;
    if (j == sb.size() || (i < sa.size() && sa[i] <= sb[j])) {
      x = sa[i];
    } else {
      x = sb[j];
    }
    while (i < sa.size() && sa[i] <= x) ++i;
    while (j < sb.size() && sb[j] <= x) ++j;
    const double diff = static_cast<double>(i) / n - static_cast<double>(j) / m;
    max_diff = std::max(max_diff, diff);
    min_diff = std::min(min_diff, diff);
  }
  KsResult r;
  r.d = std::max(std::clamp(-min_diff, 0.0, 1.0), max_diff);
  r.p = kolmogorov_sf(std::sqrt(n * m / (n + m)) * r.d);
  return r;
}

ScoreDistribution ScoreDistribution::from_values(std::string label, std::vector<double> values) {
  ScoreDistribution d;
  d.label = std::move(label);
  d.values = std::move(values);
  if (!d.values.empty()) d.mean = headscope::mean(d.values);
  try {
    d.skewness = headscope::skewness(d.values);
  } catch (const Error&) {
    d.skewness.reset();
  }
  return d;
}

BaselineComparison compare_to_baseline(const ScoreDistribution& primary, const ScoreDistribution& baseline) {
  BaselineComparison c;
  c.primary_label = primary.label;
  c.baseline_label = baseline.label;
  c.mean_difference = primary.mean - baseline.mean;
  if (primary.skewness && baseline.skewness) c.skewness_difference = *primary.skewness - *baseline.skewness;
  c.ks = ks_two_sample(primary.values, baseline.values);
  return c;
}

Histogram make_histogram(std::span<const double> values, double lo, double hi, double bin_width) {
  if (!(hi > lo) || !(bin_width > 0.0)) throw Error(ErrorCode::InvalidArgument, "histogram range or width invalid");
  Histogram h;
  h.lo = lo;
  h.hi = hi;
  h.bin_width = bin_width;
  const auto bins = static_cast<std::size_t>(std::ceil((hi - lo) / bin_width - 1e-9));
  h.counts.assign(bins, 0);
  for (double v : values) {
    auto idx = static_cast<long long>(std::floor((v - lo) / bin_width + 1e-9));
    idx = std::clamp<long long>(idx, 0, static_cast<long long>(bins) - 1);
    ++h.counts[static_cast<std::size_t>(idx)];
  }
  return h;
}

std::string histogram_csv(const Histogram& h) {
  std::ostringstream out;
  out.precision(10);
  out << "bin_start,bin_end,count\n";
  for (std::size_t i = 0; i < h.counts.size(); ++i) {
    const double start = h.lo + static_cast<double>(i) * h.bin_width;
    out << start << ',' << std::min(h.hi, start + h.bin_width) << ',' << h.counts[i] << '\n';
  }
  return out.str();
}

}  // namespace headscope
