#pragma once

// Bayesian GEV estimation with a Differential Evolution Markov Chain sampler
// (ter Braak 2006). A population of chains moves by scaled differences of two
// other chains' states; the posterior is the likelihood under a flat prior box.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "idf/error.hpp"
#include "idf/gev.hpp"
#include "idf/numeric.hpp"
#include "idf/random.hpp"
#include "idf/series.hpp"

namespace idf {

enum class ShapePrior {
  flat,         // uniform on [xi_min, xi_max]
  geophysical,  // Martins-Stedinger beta(6, 9) on the shape, restricted to the box
};

struct SamplerConfig {
  int chains = 10;
  int iterations = 5000;
  double burn_in_fraction = 0.5;
  int thin = 1;
  int max_iterations = 40000;  // chains are extended (doubling) until R-hat passes or this is hit
  double rhat_threshold = 1.1;
  double xi_min = -0.5;
  double xi_max = 0.5;
  ShapePrior shape_prior = ShapePrior::flat;

  void validate() const {
    if (chains < 3) throw ContractError("DE-MC needs at least 3 chains");
    if (iterations < 10 || max_iterations < iterations) throw ContractError("invalid iteration counts");
    if (!(burn_in_fraction >= 0.0 && burn_in_fraction < 1.0)) throw ContractError("burn-in fraction must be in [0,1)");
    if (thin < 1) throw ContractError("thinning must be at least 1");
    if (!(xi_min < xi_max)) throw ContractError("empty shape prior");
    const double kept = std::floor(iterations * (1.0 - burn_in_fraction)) * chains / thin;
    if (kept < 1000) throw ContractError("sampler settings retain fewer than 1000 posterior samples");
  }
};

struct SamplerDiagnostics {
  std::vector<double> rhat;  // one per free parameter, in parameter order
  double acceptance_rate = 0.0;
  int iterations = 0;
};

class ConvergenceError : public EstimationError {
 public:
  ConvergenceError(const std::string& what, SamplerDiagnostics diagnostics)
      : EstimationError(what), diagnostics_(std::move(diagnostics)) {}
  const SamplerDiagnostics& diagnostics() const noexcept { return diagnostics_; }

 private:
  SamplerDiagnostics diagnostics_;
};

/// Parameter names in sampling order for a model kind.
inline std::vector<std::string> parameter_names(ModelKind kind) {
  if (kind == ModelKind::stationary) return {"mu0", "sigma", "xi"};
  return {"mu0", "mu1", "sigma", "xi"};
}

struct GevPosterior {
  ModelKind kind = ModelKind::stationary;
  int time_origin = 0;  // year with t = 0
  int final_year = 0;   // last year of the fitted data
  std::vector<GevParams> samples;
  SamplerDiagnostics diagnostics;
  std::uint64_t seed = 0;
  SamplerConfig config;

  std::vector<double> parameter_values(const std::string& name) const {
    std::vector<double> out;
    out.reserve(samples.size());
    for (const auto& s : samples) {
      if (name == "mu0") out.push_back(s.mu0);
      else if (name == "mu1") out.push_back(s.mu1);
      else if (name == "sigma") out.push_back(s.sigma);
      else if (name == "xi") out.push_back(s.xi);
      else throw ContractError("unknown parameter '" + name + "'");
    }
    return out;
  }

  double parameter_quantile(const std::string& name, double p) const {
    const auto v = parameter_values(name);
    return quantile(v, p);
  }

  /// Component-wise posterior medians.
  GevParams median_params() const {
    if (samples.empty()) throw ContractError("empty posterior");
    GevParams p;
    p.mu0 = parameter_quantile("mu0", 0.5);
    p.mu1 = kind == ModelKind::stationary ? 0.0 : parameter_quantile("mu1", 0.5);
    p.sigma = parameter_quantile("sigma", 0.5);
    p.xi = parameter_quantile("xi", 0.5);
    return p;
  }

  /// Years from origin to the final fitted year; default evaluation time.
  double final_offset() const noexcept { return static_cast<double>(final_year - time_origin); }
};

/// Uniform prior bounds derived from the data.
struct PriorBox {
  std::vector<double> lower;
  std::vector<double> upper;

  bool contains(const std::vector<double>& x) const {
    for (std::size_t k = 0; k < x.size(); ++k) {
      if (!(x[k] >= lower[k] && x[k] <= upper[k])) return false;
    }
    return true;
  }
};

namespace detail {

inline GevParams unpack(const std::vector<double>& x, ModelKind kind) {
  if (kind == ModelKind::stationary) return {x[0], 0.0, x[1], x[2]};
  return {x[0], x[1], x[2], x[3]};
}

inline std::vector<double> pack(const GevParams& p, ModelKind kind) {
  if (kind == ModelKind::stationary) return {p.mu0, p.sigma, p.xi};
  return {p.mu0, p.mu1, p.sigma, p.xi};
}

inline double gelman_rubin(const std::vector<std::vector<double>>& chains) {
  const auto m = static_cast<double>(chains.size());
  const auto n = static_cast<double>(chains.front().size());
  if (n < 2) return std::numeric_limits<double>::infinity();
  std::vector<double> means, vars;
  for (const auto& c : chains) {
    means.push_back(mean(c));
    vars.push_back(variance(c));
  }
  const double w = mean(vars);
  const double b_over_n = variance(means);
  if (w <= 0.0) return b_over_n <= 0.0 ? 1.0 : std::numeric_limits<double>::infinity();
  const double v = (n - 1.0) / n * w + b_over_n * (1.0 + 1.0 / m);
  return std::sqrt(v / w);
}

}  // namespace detail

/// Prior box: mu0 over the data range widened by three ranges each side,
/// sigma in (0, 10 sd], xi in the configured box, mu1 within +-3 sd per record length.
inline PriorBox make_prior(const AnnualMaxSeries& data, ModelKind kind, const SamplerConfig& config) {
  const auto v = data.values();
  const auto [lo_it, hi_it] = std::minmax_element(v.begin(), v.end());
  const double range = *hi_it - *lo_it;
  const double sd = stddev(v);
  if (!(range > 0.0) || !(sd > 0.0)) throw EstimationError("degenerate data: all values equal");
  const double record_years = static_cast<double>(data.entries().back().year - data.entries().front().year + 1);
  PriorBox box;
  box.lower.push_back(*lo_it - 3.0 * range);
  box.upper.push_back(*hi_it + 3.0 * range);
  if (kind == ModelKind::nonstationary) {
    box.lower.push_back(-3.0 * sd / record_years);
    box.upper.push_back(3.0 * sd / record_years);
  }
  box.lower.push_back(std::numeric_limits<double>::min());
  box.upper.push_back(10.0 * sd);
  box.lower.push_back(config.xi_min);
  box.upper.push_back(config.xi_max);
  return box;
}

/// Posterior samples of a stationary or linear-trend-location GEV.
inline GevPosterior fit_demc(const AnnualMaxSeries& data, ModelKind kind, const SamplerConfig& config,
                             std::uint64_t seed) {
  config.validate();
  if (data.size() < 15) throw ContractError("fit_demc needs at least 15 annual maxima");
  const PriorBox prior = make_prior(data, kind, config);
  const int time_origin = data.entries().front().year;
  const auto z = data.values();
  const auto t = time_offsets(data, time_origin);
  const std::size_t dim = prior.lower.size();
  const int xi_index = static_cast<int>(dim) - 1;

  auto log_posterior = [&](const std::vector<double>& x) {
    if (!prior.contains(x)) return -std::numeric_limits<double>::infinity();
    double lp = gev_loglik(z, t, detail::unpack(x, kind));
    if (config.shape_prior == ShapePrior::geophysical) {
      const double xi = x[static_cast<std::size_t>(xi_index)];
      if (!(xi > -0.5 && xi < 0.5)) return -std::numeric_limits<double>::infinity();
      lp += 5.0 * std::log(0.5 - xi) + 8.0 * std::log(0.5 + xi);
    }
    return lp;
  };

  // Chain starting points: L-moment fit (on detrended data for the trend model).
  GevParams center;
  {
    double slope = 0.0;
    std::vector<double> detrended = z;
    if (kind == ModelKind::nonstationary) {
      slope = std::clamp(fit_line(t, z).slope, 0.9 * prior.lower[1], 0.9 * prior.upper[1]);
      for (std::size_t i = 0; i < z.size(); ++i) detrended[i] = z[i] - slope * t[i];
    }
    try {
      center = lmoment_fit(detrended);
    } catch (const EstimationError&) {
      throw EstimationError("degenerate data: zero L-scale");
    }
    center.mu1 = slope;
    center.xi = std::clamp(center.xi, config.xi_min + 0.1 * (config.xi_max - config.xi_min),
                           config.xi_max - 0.1 * (config.xi_max - config.xi_min));
    center.sigma = std::min(center.sigma, 0.9 * prior.upper[kind == ModelKind::stationary ? 1 : 2]);
    if (!std::isfinite(log_posterior(detail::pack(center, kind)))) {
      const auto m = sample_lmoments(detrended);
      center.sigma = m.l2 / std::log(2.0);
      center.mu0 = m.l1 - kEulerGamma * center.sigma;
      center.xi = std::clamp(0.0, config.xi_min, config.xi_max);
    }
    if (!std::isfinite(log_posterior(detail::pack(center, kind)))) {
      throw EstimationError("no starting point with finite posterior density");
    }
  }

  Philox4x32 rng(seed);
  const auto n_chains = static_cast<std::size_t>(config.chains);
  std::vector<std::vector<double>> state(n_chains);
  std::vector<double> state_lp(n_chains);
  const double record_years = std::max(1.0, t.back() + 1.0);
  for (std::size_t c = 0; c < n_chains; ++c) {
    std::vector<double> start = detail::pack(center, kind);
    for (int attempt = 0; attempt < 100; ++attempt) {
      GevParams j = center;
      const double shrink = std::pow(0.5, attempt / 10);
      j.mu0 += shrink * 0.1 * center.sigma * standard_normal(rng);
      if (kind == ModelKind::nonstationary) j.mu1 += shrink * 0.1 * center.sigma / record_years * standard_normal(rng);
      j.sigma *= std::exp(shrink * 0.1 * standard_normal(rng));
      j.xi += shrink * 0.05 * standard_normal(rng);
      auto candidate = detail::pack(j, kind);
      if (std::isfinite(log_posterior(candidate))) {
        start = std::move(candidate);
        break;
      }
    }
    state[c] = std::move(start);
    state_lp[c] = log_posterior(state[c]);
  }

  std::vector<double> jitter(dim);
  for (std::size_t k = 0; k < dim; ++k) {
    const double width = std::isfinite(prior.upper[k] - prior.lower[k]) ? prior.upper[k] - prior.lower[k] : 1.0;
    jitter[k] = 1e-4 * width;
  }
  const double gamma = 2.38 / std::sqrt(2.0 * static_cast<double>(dim));

  // history[generation][chain]
  std::vector<std::vector<std::vector<double>>> history;
  std::size_t accepted = 0, proposed = 0;
  std::vector<double> proposal(dim);

  auto run_generations = [&](int count) {
    for (int g = 0; g < count; ++g) {
      const auto generation = history.size();
      const double step = (generation + 1) % 10 == 0 ? 1.0 : gamma;
      for (std::size_t i = 0; i < n_chains; ++i) {
        std::size_t a = 0, b = 0;
        do {
          a = static_cast<std::size_t>(rng.next_u64() % n_chains);
        } while (a == i);
        do {
          b = static_cast<std::size_t>(rng.next_u64() % n_chains);
        } while (b == i || b == a);
        for (std::size_t k = 0; k < dim; ++k) {
          proposal[k] = state[i][k] + step * (state[a][k] - state[b][k]) + (2.0 * rng.uniform() - 1.0) * jitter[k];
        }
        const double lp = log_posterior(proposal);
        ++proposed;
        if (std::isfinite(lp) && std::log(rng.uniform()) < lp - state_lp[i]) {
          state[i] = proposal;
          state_lp[i] = lp;
          ++accepted;
        }
      }
      history.push_back(state);
    }
  };

  auto retained_range = [&] {
    const auto total = history.size();
    const auto burn = static_cast<std::size_t>(std::floor(static_cast<double>(total) * config.burn_in_fraction));
    return std::pair{burn, total};
  };

  auto diagnose = [&] {
    SamplerDiagnostics d;
    d.iterations = static_cast<int>(history.size());
    d.acceptance_rate = proposed ? static_cast<double>(accepted) / static_cast<double>(proposed) : 0.0;
    const auto [burn, total] = retained_range();
    for (std::size_t k = 0; k < dim; ++k) {
      std::vector<std::vector<double>> per_chain(n_chains);
      for (std::size_t g = burn; g < total; g += static_cast<std::size_t>(config.thin)) {
        for (std::size_t c = 0; c < n_chains; ++c) per_chain[c].push_back(history[g][c][k]);
      }
      d.rhat.push_back(detail::gelman_rubin(per_chain));
    }
    return d;
  };

  run_generations(config.iterations);
  SamplerDiagnostics diag = diagnose();
  auto converged = [&] {
    return std::all_of(diag.rhat.begin(), diag.rhat.end(), [&](double r) { return r <= config.rhat_threshold; });
  };
  while (!converged() && static_cast<int>(history.size()) < config.max_iterations) {
    const int extra = std::min(static_cast<int>(history.size()), config.max_iterations - static_cast<int>(history.size()));
    run_generations(extra);
    diag = diagnose();
  }
  if (!converged()) {
    std::string msg = "DE-MC did not converge after " + std::to_string(history.size()) + " iterations (R-hat";
    const auto names = parameter_names(kind);
    for (std::size_t k = 0; k < dim; ++k) msg += " " + names[k] + "=" + std::to_string(diag.rhat[k]);
    throw ConvergenceError(msg + ")", diag);
  }

  GevPosterior post;
  post.kind = kind;
  post.time_origin = time_origin;
  post.final_year = data.entries().back().year;
  post.seed = seed;
  post.config = config;
  post.diagnostics = std::move(diag);
  const auto [burn, total] = retained_range();
  for (std::size_t g = burn; g < total; g += static_cast<std::size_t>(config.thin)) {
    for (std::size_t c = 0; c < n_chains; ++c) post.samples.push_back(detail::unpack(history[g][c], kind));
  }
  return post;
}

struct ReturnLevelEstimate {
  double return_period_y = 0.0;
  double q05 = 0.0;
  double q50 = 0.0;
  double q95 = 0.0;
};

/// T-year return level per posterior sample, summarized by its 5/50/95% quantiles.
/// `eval_t` (years from the posterior's origin) defaults to the final fitted
/// year and is ignored for stationary models.
inline ReturnLevelEstimate return_level(const GevPosterior& post, double return_period_y,
                                        std::optional<double> eval_t = std::nullopt) {
  if (!(return_period_y > 1.0)) throw ContractError("return period must exceed 1 year");
  if (post.samples.empty()) throw ContractError("empty posterior");
  const double t = post.kind == ModelKind::stationary ? 0.0 : eval_t.value_or(post.final_offset());
  std::vector<double> levels;
  levels.reserve(post.samples.size());
  for (const auto& s : post.samples) levels.push_back(gev_return_level(s, return_period_y, t));
  std::sort(levels.begin(), levels.end());
  return {return_period_y, quantile_sorted(levels, 0.05), quantile_sorted(levels, 0.5), quantile_sorted(levels, 0.95)};
}

/// Small-sample AIC of the quantile fit: Gringorten empirical quantiles against
/// model quantiles of the posterior-median parameters. For the trend model the
/// data are first detrended to t = 0.
inline double aicc(const AnnualMaxSeries& data, const GevPosterior& post) {
  const std::size_t n = data.size();
  const int m = parameter_count(post.kind);
  if (static_cast<double>(n) <= m + 1.0) throw ContractError("aicc needs more than m + 1 observations");
  const GevParams p = post.median_params();
  std::vector<double> values = data.values();
  if (post.kind == ModelKind::nonstationary) {
    const auto t = time_offsets(data, post.time_origin);
    for (std::size_t i = 0; i < n; ++i) values[i] -= p.mu1 * t[i];
  }
  std::sort(values.begin(), values.end());
  GevParams at_origin = p;
  at_origin.mu1 = 0.0;
  double sse = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = values[i] - gev_quantile(gringorten_position(i + 1, n), at_origin);
    sse += r * r;
  }
  sse = std::max(sse, 1e-12);
  const double dn = static_cast<double>(n);
  const double aic = dn * std::log(sse / dn) + 2.0 * m;
  return aic + 2.0 * m * (m + 1.0) / (dn - m - 1.0);
}

inline nlohmann::json to_json(const SamplerConfig& c) {
  return {{"chains", c.chains},
          {"iterations", c.iterations},
          {"burn_in_fraction", c.burn_in_fraction},
          {"thin", c.thin},
          {"max_iterations", c.max_iterations},
          {"rhat_threshold", c.rhat_threshold},
          {"xi_min", c.xi_min},
          {"xi_max", c.xi_max},
          {"shape_prior", c.shape_prior == ShapePrior::flat ? "flat" : "geophysical"}};
}

inline SamplerConfig sampler_config_from_json(const nlohmann::json& j, SamplerConfig c = {}) {
  c.chains = j.value("chains", c.chains);
  c.iterations = j.value("iterations", c.iterations);
  c.burn_in_fraction = j.value("burn_in_fraction", c.burn_in_fraction);
  c.thin = j.value("thin", c.thin);
  c.max_iterations = j.value("max_iterations", std::max(c.max_iterations, c.iterations));
  c.rhat_threshold = j.value("rhat_threshold", c.rhat_threshold);
  c.xi_min = j.value("xi_min", c.xi_min);
  c.xi_max = j.value("xi_max", c.xi_max);
  const std::string prior = j.value("shape_prior", std::string("flat"));
  if (prior == "flat") c.shape_prior = ShapePrior::flat;
  else if (prior == "geophysical") c.shape_prior = ShapePrior::geophysical;
  else throw ContractError("unknown shape_prior '" + prior + "'");
  return c;
}

/// Posterior summary: parameter quantiles, diagnostics, seed and config.
inline nlohmann::json to_json(const GevPosterior& post) {
  nlohmann::json params = nlohmann::json::object();
  nlohmann::json rhat = nlohmann::json::object();
  const auto names = parameter_names(post.kind);
  for (std::size_t k = 0; k < names.size(); ++k) {
    const auto v = post.parameter_values(names[k]);
    params[names[k]] = {{"q05", quantile(v, 0.05)}, {"q50", quantile(v, 0.5)}, {"q95", quantile(v, 0.95)}};
    if (k < post.diagnostics.rhat.size()) rhat[names[k]] = post.diagnostics.rhat[k];
  }
  return {{"model_kind", to_string(post.kind)},
          {"time_origin", post.time_origin},
          {"final_year", post.final_year},
          {"sample_count", post.samples.size()},
          {"parameters", params},
          {"diagnostics",
           {{"rhat", rhat},
            {"acceptance_rate", post.diagnostics.acceptance_rate},
            {"iterations", post.diagnostics.iterations}}},
          {"seed", post.seed},
          {"config", to_json(post.config)}};
}

}  // namespace idf
