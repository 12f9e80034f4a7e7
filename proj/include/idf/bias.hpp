#pragma once

// Quantile-mapping bias correction of annual-maximum series.
//
//   historical:   x' = F_obs^-1(F_mod(x))
//   equidistant:  x' = x + F_obs^-1(F_proj(x)) - F_mod^-1(F_proj(x))
//   equiratio:    x' = x * F_obs^-1(F_proj(x)) / F_mod^-1(F_proj(x))
//
// F is either a GEV fitted by L-moments or a Gaussian kernel density estimate.

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "idf/error.hpp"
#include "idf/gev.hpp"
#include "idf/numeric.hpp"
#include "idf/series.hpp"

namespace idf {

/// Silverman's rule: 0.9 * min(sd, IQR / 1.34) * n^(-1/5). Falls back to the
/// non-zero spread measure when one of them vanishes.
inline double silverman_bandwidth(std::span<const double> points) {
  if (points.size() < 2) throw ContractError("bandwidth needs at least 2 points");
  std::vector<double> sorted(points.begin(), points.end());
  std::sort(sorted.begin(), sorted.end());
  const double sd = stddev(sorted);
  const double iqr = (quantile_sorted(sorted, 0.75) - quantile_sorted(sorted, 0.25)) / 1.34;
  double spread = std::min(sd, iqr);
  if (!(spread > 0.0)) spread = std::max(sd, iqr);
  if (!(spread > 0.0)) throw EstimationError("bandwidth undefined for a constant sample");
  return 0.9 * spread * std::pow(static_cast<double>(points.size()), -0.2);
}

class KdeModel {
 public:
  explicit KdeModel(std::span<const double> points) : KdeModel(points, silverman_bandwidth(points)) {}

  KdeModel(std::span<const double> points, double bandwidth) : points_(points.begin(), points.end()), h_(bandwidth) {
    if (!(std::isfinite(h_) && h_ > 0.0)) throw ContractError("bandwidth must be positive and finite");
    std::sort(points_.begin(), points_.end());
    if (points_.size() < 2 || points_.front() == points_.back()) {
      throw ContractError("KDE needs at least two distinct points");
    }
  }

  const std::vector<double>& points() const noexcept { return points_; }
  double bandwidth() const noexcept { return h_; }

  double cdf(double x) const noexcept {
    double acc = 0.0;
    for (double xi : points_) acc += normal_cdf((x - xi) / h_);
    return acc / static_cast<double>(points_.size());
  }

  double pdf(double x) const noexcept {
    double acc = 0.0;
    for (double xi : points_) acc += normal_pdf((x - xi) / h_);
    return acc / (static_cast<double>(points_.size()) * h_);
  }

  /// Bisection on [min - 6h, max + 6h] to 1e-10 absolute.
  double quantile(double p) const {
    if (!(p > 0.0 && p < 1.0)) throw ContractError("KDE quantile probability must lie in (0,1)");
    double lo = points_.front() - 6.0 * h_, hi = points_.back() + 6.0 * h_;
    if (cdf(lo) >= p) return lo;
    if (cdf(hi) <= p) return hi;
    while (hi - lo > 1e-10) {
      const double mid = 0.5 * (lo + hi);
      if (mid <= lo || mid >= hi) break;
      (cdf(mid) < p ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
  }

 private:
  std::vector<double> points_;
  double h_;
};

inline double kde_cdf(const KdeModel& m, double x) { return m.cdf(x); }
inline double kde_quantile(const KdeModel& m, double p) { return m.quantile(p); }

enum class QmMethod { gev, kde };

inline std::string to_string(QmMethod m) { return m == QmMethod::gev ? "gev" : "kde"; }

inline QmMethod parse_qm_method(const std::string& text) {
  if (text == "gev") return QmMethod::gev;
  if (text == "kde") return QmMethod::kde;
  throw ContractError("unknown correction method '" + text + "'");
}

/// A fitted marginal distribution used on either side of a mapping.
class Marginal {
 public:
  static Marginal fit(std::span<const double> values, QmMethod method) {
    if (method == QmMethod::gev) return Marginal(lmoment_fit(values));
    return Marginal(KdeModel(values));
  }

  double cdf(double x) const {
    if (const auto* g = std::get_if<GevParams>(&model_)) return gev_cdf(x, *g);
    return std::get<KdeModel>(model_).cdf(x);
  }

  double quantile(double p) const {
    if (const auto* g = std::get_if<GevParams>(&model_)) return gev_quantile(p, *g);
    return std::get<KdeModel>(model_).quantile(p);
  }

  const std::variant<GevParams, KdeModel>& model() const noexcept { return model_; }

 private:
  explicit Marginal(GevParams p) : model_(p) {}
  explicit Marginal(KdeModel k) : model_(std::move(k)) {}

  std::variant<GevParams, KdeModel> model_;
};

namespace detail {

inline void require_length(const AnnualMaxSeries& s, const char* role) {
  if (s.size() < 15) throw ContractError(std::string(role) + " series needs at least 15 annual maxima");
}

/// Probability clamped to [1/(2n), 1 - 1/(2n)].
inline double clamp_probability(double p, std::size_t n) {
  const double edge = 1.0 / (2.0 * static_cast<double>(n));
  return std::clamp(p, edge, 1.0 - edge);
}

inline void require_positive(std::span<const double> values, const char* stage) {
  for (double v : values) {
    if (!(std::isfinite(v) && v > 0.0)) {
      throw EstimationError(std::string(stage) + " produced a non-positive or non-finite value");
    }
  }
}

}  // namespace detail

/// Historical quantile mapping of model maxima onto the observed distribution.
/// Year labels and ordering of `model_am` are kept.
inline AnnualMaxSeries qm_historical(const AnnualMaxSeries& model_am, const AnnualMaxSeries& obs_am, QmMethod method) {
  detail::require_length(model_am, "model");
  detail::require_length(obs_am, "observed");
  const auto x = model_am.values();
  const auto f_mod = Marginal::fit(x, method);
  const auto f_obs = Marginal::fit(obs_am.values(), method);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = f_obs.quantile(detail::clamp_probability(f_mod.cdf(x[i]), x.size()));
  }
  detail::require_positive(out, "historical quantile mapping");
  return model_am.with_values(out);
}

struct ProjectedCorrection {
  AnnualMaxSeries series;
  bool equiratio_fallback = false;  // true when EQM went non-positive and EQR was used instead
};

/// Equiratio mapping. Each quantile is floored at the minimum of the sample it
/// was fitted on, so the ratio stays positive for positive inputs.
inline AnnualMaxSeries eqr_projected(const AnnualMaxSeries& model_proj, const AnnualMaxSeries& model_hist,
                                     const AnnualMaxSeries& obs_hist, QmMethod method) {
  detail::require_length(model_proj, "projected model");
  detail::require_length(model_hist, "historical model");
  detail::require_length(obs_hist, "observed");
  const auto x = model_proj.values();
  const auto obs = obs_hist.values();
  const auto hist = model_hist.values();
  const auto f_proj = Marginal::fit(x, method);
  const auto f_obs = Marginal::fit(obs, method);
  const auto f_hist = Marginal::fit(hist, method);
  const double obs_floor = *std::min_element(obs.begin(), obs.end());
  const double hist_floor = *std::min_element(hist.begin(), hist.end());
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double p = detail::clamp_probability(f_proj.cdf(x[i]), x.size());
    const double num = std::max(f_obs.quantile(p), obs_floor);
    const double den = std::max(f_hist.quantile(p), hist_floor);
    if (!(den > 0.0)) throw EstimationError("equiratio mapping: zero model quantile");
    out[i] = x[i] * num / den;
  }
  detail::require_positive(out, "equiratio mapping");
  return model_proj.with_values(out);
}

/// Equidistant mapping; the whole series falls back to equiratio mapping if any
/// corrected value is not positive.
inline ProjectedCorrection eqm_projected(const AnnualMaxSeries& model_proj, const AnnualMaxSeries& model_hist,
                                         const AnnualMaxSeries& obs_hist, QmMethod method) {
  detail::require_length(model_proj, "projected model");
  detail::require_length(model_hist, "historical model");
  detail::require_length(obs_hist, "observed");
  const auto x = model_proj.values();
  const auto f_proj = Marginal::fit(x, method);
  const auto f_obs = Marginal::fit(obs_hist.values(), method);
  const auto f_hist = Marginal::fit(model_hist.values(), method);
  std::vector<double> out(x.size());
  bool positive = true;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double p = detail::clamp_probability(f_proj.cdf(x[i]), x.size());
    out[i] = x[i] + f_obs.quantile(p) - f_hist.quantile(p);
    positive = positive && std::isfinite(out[i]) && out[i] > 0.0;
  }
  if (!positive) return {eqr_projected(model_proj, model_hist, obs_hist, method), true};
  return {model_proj.with_values(out), false};
}

/// Two-sample Kolmogorov-Smirnov distance between empirical CDFs.
inline double ks_distance(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw ContractError("KS distance of an empty sample");
  std::vector<double> x(a.begin(), a.end()), y(b.begin(), b.end());
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < x.size() && j < y.size()) {
    const double v = std::min(x[i], y[j]);
    while (i < x.size() && x[i] <= v) ++i;
    while (j < y.size() && y[j] <= v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / x.size() - static_cast<double>(j) / y.size()));
  }
  return d;
}

}  // namespace idf
