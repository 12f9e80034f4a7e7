#pragma once

// Generalized extreme value distribution with an optional linear trend in the
// location: mu(t) = mu0 + mu1 * t, t in years from a chosen origin.
//
//   G(z) = exp(-[1 + xi (z - mu(t)) / sigma]_+^(-1/xi))
//
// Shape magnitudes below kGumbelShape use the xi -> 0 limit
// exp(-exp(-(z - mu) / sigma)).

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "idf/error.hpp"
#include "idf/numeric.hpp"
#include "idf/series.hpp"

namespace idf {

inline constexpr double kGumbelShape = 1e-8;

enum class ModelKind { stationary, nonstationary };

inline std::string to_string(ModelKind kind) { return kind == ModelKind::stationary ? "stationary" : "nonstationary"; }

inline ModelKind parse_model_kind(const std::string& text) {
  if (text == "stationary" || text == "sta") return ModelKind::stationary;
  if (text == "nonstationary" || text == "nonsta") return ModelKind::nonstationary;
  throw ContractError("unknown model kind '" + text + "'");
}

/// Number of free parameters of a model kind.
inline int parameter_count(ModelKind kind) noexcept { return kind == ModelKind::stationary ? 3 : 4; }

struct GevParams {
  double mu0 = 0.0;    // location at t = 0
  double mu1 = 0.0;    // location trend per year
  double sigma = 1.0;  // scale
  double xi = 0.0;     // shape

  double location(double t) const noexcept { return mu0 + mu1 * t; }

  bool valid() const noexcept {
    return std::isfinite(mu0) && std::isfinite(mu1) && std::isfinite(sigma) && sigma > 0.0 && std::isfinite(xi);
  }
};

inline void require_valid(const GevParams& p) {
  if (!p.valid()) throw ContractError("GEV parameters invalid: sigma must be positive and all values finite");
}

inline double gev_cdf(double z, const GevParams& p, double t = 0.0) {
  if (!std::isfinite(z)) throw ContractError("gev_cdf: non-finite argument");
  require_valid(p);
  const double s = (z - p.location(t)) / p.sigma;
  if (std::abs(p.xi) < kGumbelShape) return std::exp(-std::exp(-s));
  const double arg = p.xi * s;
  if (arg <= -1.0) return p.xi > 0.0 ? 0.0 : 1.0;
  return std::exp(-std::exp(-std::log1p(arg) / p.xi));
}

/// Log density; -infinity outside the support.
inline double gev_logpdf(double z, const GevParams& p, double t = 0.0) noexcept {
  const double s = (z - p.location(t)) / p.sigma;
  const double log_sigma = std::log(p.sigma);
  if (std::abs(p.xi) < kGumbelShape) return -log_sigma - s - std::exp(-s);
  const double arg = p.xi * s;
  if (arg <= -1.0) return -std::numeric_limits<double>::infinity();
  const double log_t = std::log1p(arg);
  return -log_sigma - (1.0 + 1.0 / p.xi) * log_t - std::exp(-log_t / p.xi);
}

inline double gev_pdf(double z, const GevParams& p, double t = 0.0) noexcept { return std::exp(gev_logpdf(z, p, t)); }

/// Inverse CDF at non-exceedance probability `prob` in (0,1).
inline double gev_quantile(double prob, const GevParams& p, double t = 0.0) {
  if (!(prob > 0.0 && prob < 1.0)) throw ContractError("gev_quantile: probability must lie in (0,1)");
  require_valid(p);
  const double y = -std::log(prob);
  const double mu = p.location(t);
  if (std::abs(p.xi) < kGumbelShape) return mu - p.sigma * std::log(y);
  return mu + p.sigma * std::expm1(-p.xi * std::log(y)) / p.xi;
}

/// Sum of log densities of `z[i]` at times `t[i]`.
inline double gev_loglik(std::span<const double> z, std::span<const double> t, const GevParams& p) noexcept {
  if (!p.valid()) return -std::numeric_limits<double>::infinity();
  double total = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double lp = gev_logpdf(z[i], p, t.empty() ? 0.0 : t[i]);
    if (lp == -std::numeric_limits<double>::infinity()) return lp;
    total += lp;
  }
  return total;
}

/// Years expressed as t = year - time_origin.
inline std::vector<double> time_offsets(const AnnualMaxSeries& data, int time_origin) {
  std::vector<double> t;
  t.reserve(data.size());
  for (const auto& e : data.entries()) t.push_back(static_cast<double>(e.year - time_origin));
  return t;
}

/// Log-likelihood of an annual-maximum series. A stationary model ignores mu1.
inline double gev_loglik(const AnnualMaxSeries& data, GevParams p, ModelKind kind, int time_origin) {
  if (data.empty()) throw ContractError("gev_loglik: empty data");
  if (kind == ModelKind::stationary) p.mu1 = 0.0;
  const auto z = data.values();
  const auto t = time_offsets(data, time_origin);
  return gev_loglik(z, t, p);
}

// ---------------------------------------------------------------------------
// L-moment estimation

struct SampleLMoments {
  double l1 = 0.0;
  double l2 = 0.0;
  double t3 = 0.0;
};

/// Unbiased sample L-moments via probability-weighted moments.
inline SampleLMoments sample_lmoments(std::span<const double> values) {
  const std::size_t n = values.size();
  if (n < 3) throw ContractError("L-moments need at least 3 values");
  std::vector<double> x(values.begin(), values.end());
  std::sort(x.begin(), x.end());
  const double dn = static_cast<double>(n);
  double b0 = 0.0, b1 = 0.0, b2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = static_cast<double>(i);
    b0 += x[i];
    b1 += x[i] * r / (dn - 1.0);
    b2 += x[i] * r * (r - 1.0) / ((dn - 1.0) * (dn - 2.0));
  }
  b0 /= dn;
  b1 /= dn;
  b2 /= dn;
  SampleLMoments m;
  m.l1 = b0;
  m.l2 = 2.0 * b1 - b0;
  const double l3 = 6.0 * b2 - 6.0 * b1 + b0;
  m.t3 = m.l2 > 0.0 ? l3 / m.l2 : 0.0;
  return m;
}

namespace detail {

// L-skewness of a GEV with Hosking shape k (k = -xi).
inline double gev_tau3(double k) {
  if (std::abs(k) < 1e-7) return 2.0 * std::log(3.0) / std::log(2.0) - 3.0;
  return 2.0 * std::expm1(-k * std::log(3.0)) / std::expm1(-k * std::log(2.0)) - 3.0;
}

}  // namespace detail

/// Stationary GEV from sample L-moments (Hosking's approximation refined by
/// Newton steps on the exact L-skewness relation).
inline GevParams lmoment_fit(std::span<const double> values) {
  if (values.size() < 5) throw ContractError("lmoment_fit needs at least 5 values");
  for (double v : values) {
    if (!std::isfinite(v)) throw ContractError("lmoment_fit: non-finite value");
  }
  const auto m = sample_lmoments(values);
  if (!(m.l2 > 0.0)) throw EstimationError("lmoment_fit: zero L-scale (constant sample)");
  const double c = 2.0 / (3.0 + m.t3) - std::log(2.0) / std::log(3.0);
  double k = 7.8590 * c + 2.9554 * c * c;
  for (int iter = 0; iter < 20; ++iter) {
    const double h = 1e-6;
    const double f = detail::gev_tau3(k) - m.t3;
    const double df = (detail::gev_tau3(k + h) - detail::gev_tau3(k - h)) / (2.0 * h);
    if (df == 0.0 || !std::isfinite(df)) break;
    const double step = f / df;
    k -= step;
    if (std::abs(step) < 1e-12) break;
  }
  k = std::clamp(k, -0.95, 5.0);
  GevParams p;
  if (std::abs(k) < 1e-7) {
    p.sigma = m.l2 / std::log(2.0);
    p.mu0 = m.l1 - kEulerGamma * p.sigma;
    p.xi = 0.0;
    return p;
  }
  const double g = std::tgamma(1.0 + k);
  p.sigma = m.l2 * k / (-std::expm1(-k * std::log(2.0)) * g);
  p.mu0 = m.l1 - p.sigma * (1.0 - g) / k;
  p.xi = -k;
  return p;
}

inline GevParams lmoment_fit(const AnnualMaxSeries& data) {
  const auto v = data.values();
  return lmoment_fit(v);
}

/// Gringorten plotting position of the i-th smallest (1-based) of n values.
inline double gringorten_position(std::size_t i, std::size_t n) {
  if (i < 1 || i > n) throw ContractError("plotting position rank out of range");
  return (static_cast<double>(i) - 0.44) / (static_cast<double>(n) + 0.12);
}

/// Return-period quantile: non-exceedance 1 - 1/T.
inline double gev_return_level(const GevParams& p, double return_period_y, double t = 0.0) {
  if (!(return_period_y > 1.0)) throw ContractError("return period must exceed 1 year");
  return gev_quantile(1.0 - 1.0 / return_period_y, p, t);
}

}  // namespace idf
