#pragma once

// Trend detection and model-agreement statistics.

#include <algorithm>
#include <cmath>
#include <map>
#include <span>
#include <vector>

#include "idf/demc.hpp"
#include "idf/error.hpp"
#include "idf/numeric.hpp"
#include "idf/series.hpp"

namespace idf {

inline constexpr double kTrendSignificance = 0.10;

struct YearValue {
  int year = 0;
  double value = 0.0;
};

inline std::vector<YearValue> year_values(const AnnualMaxSeries& s) {
  std::vector<YearValue> out;
  for (const auto& e : s.entries()) out.push_back({e.year, e.intensity});
  return out;
}

struct TrendResult {
  long long s_statistic = 0;
  double variance_s = 0.0;   // after tie and autocorrelation corrections
  double z = 0.0;
  double p_value = 1.0;      // two-sided
  double sen_slope_per_decade = 0.0;
  bool significant_10pct = false;
  double autocorrelation_factor = 1.0;  // n / n_s*, 1 when no lag is significant
};

/// Median of pairwise slopes (value units per year).
inline double theil_sen(std::span<const YearValue> series) {
  if (series.size() < 2) throw ContractError("theil_sen needs at least 2 points");
  std::vector<double> slopes;
  slopes.reserve(series.size() * (series.size() - 1) / 2);
  for (std::size_t i = 0; i < series.size(); ++i) {
    for (std::size_t j = i + 1; j < series.size(); ++j) {
      if (series[j].year == series[i].year) continue;
      slopes.push_back((series[j].value - series[i].value) / static_cast<double>(series[j].year - series[i].year));
    }
  }
  if (slopes.empty()) throw ContractError("theil_sen needs at least 2 distinct years");
  return median(slopes);
}

namespace detail {

inline int sign(double v) noexcept { return (v > 0.0) - (v < 0.0); }

/// Average ranks (1-based), ties share the mean rank. Values closer than a
/// few ulps of the sample scale tie, so detrending round-off does not split them.
inline std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  double scale = 0.0;
  for (double x : v) scale = std::max(scale, std::abs(x));
  const double tol = 1e-12 * scale;
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] - v[order[i]] <= tol) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

inline std::vector<double> autocorrelation(std::span<const double> x) {
  const std::size_t n = x.size();
  const double m = mean(x);
  double denom = 0.0;
  for (double v : x) denom += (v - m) * (v - m);
  std::vector<double> acf(n, 0.0);
  if (denom <= 0.0) return acf;
  for (std::size_t lag = 0; lag < n; ++lag) {
    double num = 0.0;
    for (std::size_t i = 0; i + lag < n; ++i) num += (x[i] - m) * (x[i + lag] - m);
    acf[lag] = num / denom;
  }
  return acf;
}

}  // namespace detail

/// S statistic by direct pair counting.
inline long long mann_kendall_s(std::span<const double> values) {
  long long s = 0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    for (std::size_t j = i + 1; j < values.size(); ++j) s += detail::sign(values[j] - values[i]);
  }
  return s;
}

/// Mann-Kendall test with the ties correction and the Hamed-Rao variance
/// inflation over rank autocorrelations of the Sen-detrended series that are
/// significant at 5% (|rho| > 1.96 / sqrt(n)).
inline TrendResult mann_kendall(std::span<const YearValue> series, bool autocorrelation_correction = true) {
  const std::size_t n = series.size();
  if (n < 10) throw ContractError("mann_kendall needs at least 10 values");
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = series[i].value;
  const double dn = static_cast<double>(n);

  TrendResult r;
  r.s_statistic = mann_kendall_s(x);

  std::map<double, long long> ties;
  for (double v : x) ++ties[v];
  double tie_term = 0.0;
  for (const auto& [value, count] : ties) {
    const auto t = static_cast<double>(count);
    tie_term += t * (t - 1.0) * (2.0 * t + 5.0);
  }
  double var_s = (dn * (dn - 1.0) * (2.0 * dn + 5.0) - tie_term) / 18.0;

  const double slope = theil_sen(series);
  r.sen_slope_per_decade = 10.0 * slope;

  if (autocorrelation_correction) {
    std::vector<double> detrended(n);
    for (std::size_t i = 0; i < n; ++i) detrended[i] = x[i] - slope * static_cast<double>(series[i].year - series[0].year);
    const auto acf = detail::autocorrelation(detail::average_ranks(detrended));
    const double bound = 1.96 / std::sqrt(dn);
    double sum = 0.0;
    for (std::size_t lag = 1; lag < n; ++lag) {
      if (std::abs(acf[lag]) <= bound) continue;
      const double k = static_cast<double>(n - lag);
      sum += k * (k - 1.0) * (k - 2.0) * acf[lag];
    }
    const double factor = 1.0 + 2.0 / (dn * (dn - 1.0) * (dn - 2.0)) * sum;
    if (factor > 0.0) {
      r.autocorrelation_factor = factor;
      var_s *= factor;
    }
  }
  r.variance_s = var_s;

  if (r.s_statistic == 0 || var_s <= 0.0) {
    r.z = 0.0;
  } else {
    const double s = static_cast<double>(r.s_statistic);
    r.z = (s > 0 ? s - 1.0 : s + 1.0) / std::sqrt(var_s);
  }
  r.p_value = std::clamp(2.0 * (1.0 - normal_cdf(std::abs(r.z))), 0.0, 1.0);
  r.significant_10pct = r.p_value < kTrendSignificance;
  return r;
}

struct TaylorStats {
  double normalized_std = 1.0;  // sd(model) / sd(obs)
  double pattern_corr = 1.0;
  double centered_rmse = 0.0;
  double r0 = 1.0;              // best member-vs-observation correlation
  double std_model = 0.0;
  double std_obs = 0.0;
};

namespace detail {

struct Aligned {
  std::vector<double> a, b;
};

inline Aligned align(const AnnualMaxSeries& a, const AnnualMaxSeries& b) {
  Aligned out;
  std::size_t j = 0;
  const auto& eb = b.entries();
  for (const auto& e : a.entries()) {
    while (j < eb.size() && eb[j].year < e.year) ++j;
    if (j < eb.size() && eb[j].year == e.year) {
      out.a.push_back(e.intensity);
      out.b.push_back(eb[j].intensity);
    }
  }
  return out;
}

}  // namespace detail

/// Centered Taylor statistics on paired values. `r0` must already be known.
inline TaylorStats taylor_stats(std::span<const double> model, std::span<const double> obs, double r0) {
  if (model.size() != obs.size() || model.size() < 3) throw ContractError("taylor_stats needs at least 3 paired values");
  TaylorStats ts;
  ts.std_model = stddev(model, 0);
  ts.std_obs = stddev(obs, 0);
  if (!(ts.std_obs > 0.0)) throw ContractError("observed series has no spread");
  ts.normalized_std = ts.std_model / ts.std_obs;
  ts.pattern_corr = correlation(model, obs);
  const double mm = mean(model), mo = mean(obs);
  double ss = 0.0;
  for (std::size_t i = 0; i < model.size(); ++i) {
    const double d = (model[i] - mm) - (obs[i] - mo);
    ss += d * d;
  }
  ts.centered_rmse = std::sqrt(ss / static_cast<double>(model.size()));
  ts.r0 = r0;
  return ts;
}

/// Taylor statistics of `model` against `obs` on their common years, with r0
/// the largest correlation of any ensemble member with the observations,
/// clamped to (0, 1].
inline TaylorStats taylor_stats(const AnnualMaxSeries& model, const AnnualMaxSeries& obs, const EnsembleSet& ensemble) {
  const auto pair = detail::align(model, obs);
  if (pair.a.size() < 3) throw ContractError("taylor_stats needs at least 3 overlapping years");
  double r0 = -1.0;
  for (const auto& member : ensemble.members()) {
    const auto mp = detail::align(member, obs);
    if (mp.a.size() < 3) continue;
    r0 = std::max(r0, correlation(mp.a, mp.b));
  }
  r0 = std::clamp(r0, 1e-12, 1.0);
  return taylor_stats(pair.a, pair.b, r0);
}

/// S = 4 (1 + R) / ((s + 1/s)^2 (1 + R0)), s the normalized standard deviation.
inline double skill_score(const TaylorStats& ts) {
  if (!(ts.normalized_std > 0.0)) throw ContractError("skill_score: zero normalized standard deviation");
  if (!(ts.r0 > -1.0)) throw ContractError("skill_score: r0 must exceed -1");
  const double s = ts.normalized_std;
  const double spread = s + 1.0 / s;
  return 4.0 * (1.0 + ts.pattern_corr) / (spread * spread * (1.0 + ts.r0));
}

inline double skill_score(double normalized_std, double pattern_corr, double r0) {
  TaylorStats ts;
  ts.normalized_std = normalized_std;
  ts.pattern_corr = pattern_corr;
  ts.r0 = r0;
  return skill_score(ts);
}

inline constexpr double kZ5pct = 1.96;
inline constexpr double kZ10pct = 1.64;
inline constexpr double kZ90Interval = 1.645;

struct ChangeSignificance {
  double z = 0.0;
  bool significant_5pct = false;
  bool significant_10pct = false;
};

/// Variance of a return-level estimate from its 90% credible interval.
inline double interval_variance(const ReturnLevelEstimate& e) {
  const double half = (e.q95 - e.q05) / (2.0 * kZ90Interval);
  return half * half;
}

/// Z = (future - baseline) / sqrt((var_future + var_baseline) / 2).
inline ChangeSignificance change_z(double future, double baseline, double var_future, double var_baseline) {
  if (!(var_future >= 0.0 && var_baseline >= 0.0)) throw ContractError("change_z: negative variance");
  const double pooled = 0.5 * (var_future + var_baseline);
  if (!(pooled > 0.0)) throw ContractError("change_z: zero combined variance");
  ChangeSignificance c;
  c.z = (future - baseline) / std::sqrt(pooled);
  c.significant_5pct = std::abs(c.z) > kZ5pct;
  c.significant_10pct = std::abs(c.z) > kZ10pct;
  return c;
}

inline ChangeSignificance change_z(const ReturnLevelEstimate& future, const ReturnLevelEstimate& baseline) {
  for (const auto* e : {&future, &baseline}) {
    if (!(e->q05 <= e->q50 && e->q50 <= e->q95)) throw ContractError("change_z: estimate quantiles out of order");
  }
  return change_z(future.q50, baseline.q50, interval_variance(future), interval_variance(baseline));
}

inline double relative_change(double value, double baseline) {
  if (baseline == 0.0) throw ContractError("relative_change: zero baseline");
  return (value - baseline) / baseline;
}

inline double percent_change(double value, double baseline) { return 100.0 * relative_change(value, baseline); }

}  // namespace idf
