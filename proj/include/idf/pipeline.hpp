#pragma once

// Config-driven study workflow. Each station is prepared once (cascade
// calibration, disaggregation, annual maxima); each station x duration cell is
// then corrected, fitted and compared independently on a bounded worker pool.

#include <algorithm>
#include <array>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "idf/bias.hpp"
#include "idf/cascade.hpp"
#include "idf/csv.hpp"
#include "idf/demc.hpp"
#include "idf/error.hpp"
#include "idf/random.hpp"
#include "idf/series.hpp"
#include "idf/trend.hpp"

namespace idf {

inline constexpr std::array<double, 5> kStandardReturnPeriods{2, 5, 10, 25, 50};
inline constexpr int kMinWindowYears = 30;

struct YearWindow {
  int first = 0;
  int last = 0;

  int length() const noexcept { return last - first + 1; }
  bool contains(int year) const noexcept { return year >= first && year <= last; }
};

struct ModelInput {
  std::string name;
  std::string daily;  // path as written in the config
  Calendar calendar = Calendar::gregorian;
};

struct StationInput {
  std::string id;
  std::string observed_hourly;
  std::string observed_daily;  // optional; fills gap years of the observed maxima
  std::vector<ModelInput> models;
};

struct StudyConfig {
  YearWindow baseline{1970, 2010};
  YearWindow future{2030, 2070};
  std::vector<int> durations_h{1, 2, 6, 12, 24};
  std::vector<double> return_periods_y{2, 5, 10, 25, 50};
  std::string bias_method = "auto";  // gev, kde or auto
  double wet_threshold_mm = kWetThresholdMm;
  int cascade_steps = 5;
  SamplerConfig sampler;
  std::uint64_t master_seed = 1;
  int workers = 0;  // 0: one per hardware thread
  std::filesystem::path base_dir;
  std::vector<StationInput> stations;

  std::filesystem::path resolve(const std::string& path) const {
    const std::filesystem::path p(path);
    return p.is_absolute() ? p : base_dir / p;
  }

  void validate() const {
    for (const auto* w : {&baseline, &future}) {
      if (w->length() < kMinWindowYears) {
        throw ValidationError("each window must span at least " + std::to_string(kMinWindowYears) + " years");
      }
    }
    if (!(baseline.last < future.first || future.last < baseline.first)) throw ValidationError("windows overlap");
    if (durations_h.empty()) throw ValidationError("durations_h is empty");
    for (int d : durations_h) {
      if (!is_standard_duration(d)) throw ValidationError("duration " + std::to_string(d) + " h is not supported");
    }
    if (return_periods_y.empty()) throw ValidationError("return_periods_y is empty");
    for (double t : return_periods_y) {
      if (!(t > 1.0)) throw ValidationError("return periods must exceed 1 year");
      if (std::find(kStandardReturnPeriods.begin(), kStandardReturnPeriods.end(), t) == kStandardReturnPeriods.end()) {
        throw ValidationError("return period " + csv::format(t) + " is not one of 2, 5, 10, 25, 50");
      }
    }
    if (bias_method != "gev" && bias_method != "kde" && bias_method != "auto") {
      throw ValidationError("bias_method must be gev, kde or auto");
    }
    if (!(wet_threshold_mm >= 0.0)) throw ValidationError("wet_threshold_mm must be non-negative");
    if (cascade_steps < 1 || cascade_steps > 7) throw ValidationError("cascade_steps must be between 1 and 7");
    if (workers < 0) throw ValidationError("workers must be non-negative");
    sampler.validate();
    if (stations.empty()) throw ValidationError("no stations configured");
    std::set<std::string> ids;
    for (const auto& s : stations) {
      if (s.id.empty() || !ids.insert(s.id).second) throw ValidationError("station ids must be non-empty and unique");
      if (s.observed_hourly.empty()) throw ValidationError("station " + s.id + ": observed_hourly is required");
      if (s.models.empty()) throw ValidationError("station " + s.id + ": at least one model is required");
      std::set<std::string> names;
      for (const auto& m : s.models) {
        if (m.name.empty() || !names.insert(m.name).second) {
          throw ValidationError("station " + s.id + ": model names must be non-empty and unique");
        }
      }
    }
  }
};

namespace detail {

inline YearWindow window_from_json(const nlohmann::json& j, const char* key) {
  if (!j.is_array() || j.size() != 2) throw ValidationError(std::string(key) + " must be [first_year, last_year]");
  return {j[0].get<int>(), j[1].get<int>()};
}

inline Calendar calendar_from_string(const std::string& text) {
  if (text == "gregorian") return Calendar::gregorian;
  if (text == "noleap" || text == "365_day") return Calendar::noleap;
  throw ValidationError("unknown calendar '" + text + "'");
}

inline void reject_unknown_keys(const nlohmann::json& j, std::initializer_list<const char*> known, const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    if (std::none_of(known.begin(), known.end(), [&](const char* k) { return key == k; })) {
      throw ValidationError(where + ": unknown key '" + key + "'");
    }
  }
}

}  // namespace detail

inline StudyConfig study_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {}) {
  try {
    detail::reject_unknown_keys(j,
                                {"baseline_window", "future_window", "durations_h", "return_periods_y", "bias_method",
                                 "wet_threshold_mm", "cascade_steps", "sampler", "master_seed", "workers", "stations"},
                                "config");
    StudyConfig c;
    c.base_dir = base_dir;
    if (j.contains("baseline_window")) c.baseline = detail::window_from_json(j["baseline_window"], "baseline_window");
    if (j.contains("future_window")) c.future = detail::window_from_json(j["future_window"], "future_window");
    c.durations_h = j.value("durations_h", c.durations_h);
    c.return_periods_y = j.value("return_periods_y", c.return_periods_y);
    c.bias_method = j.value("bias_method", c.bias_method);
    c.wet_threshold_mm = j.value("wet_threshold_mm", c.wet_threshold_mm);
    c.cascade_steps = j.value("cascade_steps", c.cascade_steps);
    if (j.contains("sampler")) c.sampler = sampler_config_from_json(j["sampler"]);
    c.master_seed = j.value("master_seed", c.master_seed);
    c.workers = j.value("workers", c.workers);
    for (const auto& s : j.at("stations")) {
      detail::reject_unknown_keys(s, {"id", "observed_hourly", "observed_daily", "models"}, "station");
      StationInput st;
      st.id = s.at("id").get<std::string>();
      st.observed_hourly = s.at("observed_hourly").get<std::string>();
      st.observed_daily = s.value("observed_daily", std::string());
      for (const auto& m : s.at("models")) {
        detail::reject_unknown_keys(m, {"name", "daily", "calendar"}, "model");
        st.models.push_back({m.at("name").get<std::string>(), m.at("daily").get<std::string>(),
                             detail::calendar_from_string(m.value("calendar", std::string("gregorian")))});
      }
      c.stations.push_back(std::move(st));
    }
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
}

inline StudyConfig load_study_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config '" + path.string() + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("config '" + path.string() + "': " + e.what());
  }
  return study_config_from_json(j, path.parent_path());
}

inline nlohmann::json to_json(const StudyConfig& c) {
  nlohmann::json stations = nlohmann::json::array();
  for (const auto& s : c.stations) {
    nlohmann::json models = nlohmann::json::array();
    for (const auto& m : s.models) {
      models.push_back({{"name", m.name},
                        {"daily", m.daily},
                        {"calendar", m.calendar == Calendar::gregorian ? "gregorian" : "noleap"}});
    }
    nlohmann::json st = {{"id", s.id}, {"observed_hourly", s.observed_hourly}, {"models", models}};
    if (!s.observed_daily.empty()) st["observed_daily"] = s.observed_daily;
    stations.push_back(std::move(st));
  }
  return {{"baseline_window", {c.baseline.first, c.baseline.last}},
          {"future_window", {c.future.first, c.future.last}},
          {"durations_h", c.durations_h},
          {"return_periods_y", c.return_periods_y},
          {"bias_method", c.bias_method},
          {"wet_threshold_mm", c.wet_threshold_mm},
          {"cascade_steps", c.cascade_steps},
          {"sampler", to_json(c.sampler)},
          {"master_seed", c.master_seed},
          {"workers", c.workers},
          {"stations", stations}};
}

/// Keeps only the listed stations and durations; empty lists keep everything.
inline StudyConfig filter_config(StudyConfig c, const std::vector<std::string>& stations, const std::vector<int>& durations) {
  if (!stations.empty()) {
    for (const auto& id : stations) {
      if (std::none_of(c.stations.begin(), c.stations.end(), [&](const StationInput& s) { return s.id == id; })) {
        throw ValidationError("station '" + id + "' is not in the config");
      }
    }
    std::erase_if(c.stations, [&](const StationInput& s) {
      return std::find(stations.begin(), stations.end(), s.id) == stations.end();
    });
  }
  if (!durations.empty()) c.durations_h = durations;
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Density curves

struct NamedSample {
  std::string name;
  std::vector<double> values;
};

struct DensityTable {
  std::vector<double> grid;
  std::vector<std::string> names;
  std::vector<std::vector<double>> columns;  // one per name, aligned with grid
  std::vector<std::string> warnings;
};

inline constexpr std::size_t kDensityGridPoints = 256;

/// Gaussian-kernel density of each sample on one grid spanning the pooled
/// range padded by three of the widest bandwidth. Samples with fewer than 5
/// points or no spread are skipped with a warning.
inline DensityTable emit_density_data(const std::vector<NamedSample>& samples) {
  DensityTable t;
  std::vector<KdeModel> models;
  double lo = 0.0, hi = 0.0, h_max = 0.0;
  for (const auto& s : samples) {
    if (s.values.size() < 5) {
      t.warnings.push_back("density: '" + s.name + "' has fewer than 5 points; skipped");
      continue;
    }
    try {
      KdeModel m(s.values);
      if (models.empty()) {
        lo = m.points().front();
        hi = m.points().back();
      }
      lo = std::min(lo, m.points().front());
      hi = std::max(hi, m.points().back());
      h_max = std::max(h_max, m.bandwidth());
      models.push_back(std::move(m));
      t.names.push_back(s.name);
    } catch (const Error&) {
      t.warnings.push_back("density: '" + s.name + "' is constant; skipped");
    }
  }
  if (models.empty()) return t;
  lo -= 3.0 * h_max;
  hi += 3.0 * h_max;
  t.grid.resize(kDensityGridPoints);
  for (std::size_t i = 0; i < kDensityGridPoints; ++i) {
    t.grid[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(kDensityGridPoints - 1);
  }
  for (const auto& m : models) {
    std::vector<double> col(kDensityGridPoints);
    for (std::size_t i = 0; i < kDensityGridPoints; ++i) col[i] = m.pdf(t.grid[i]);
    t.columns.push_back(std::move(col));
  }
  return t;
}

inline void write_density_csv(std::ostream& out, const DensityTable& t) {
  csv::Writer w(out);
  std::vector<std::string> header{"intensity_mm_per_h"};
  header.insert(header.end(), t.names.begin(), t.names.end());
  w.row(header);
  for (std::size_t i = 0; i < t.grid.size(); ++i) {
    std::vector<std::string> row{csv::format(t.grid[i])};
    for (const auto& c : t.columns) row.push_back(csv::format(c[i]));
    w.row(row);
  }
}

// ---------------------------------------------------------------------------
// Result rows

struct IdfRow {
  std::string station;
  int duration_h = 0;
  double return_period_y = 0.0;
  std::string period;  // baseline or future
  std::string source_tag;
  ModelKind model_kind = ModelKind::stationary;
  double q05 = 0.0, q50 = 0.0, q95 = 0.0;
};

struct ChangeRow {
  std::string station;
  int duration_h = 0;
  double return_period_y = 0.0;
  std::string comparison_case;
  double baseline_q50 = 0.0;
  double future_q50 = 0.0;
  double percent_change = 0.0;
  ChangeSignificance significance;
};

struct SkillRow {
  std::string station;
  int duration_h = 0;
  std::string stage;  // raw or corrected
  std::string source_tag;
  TaylorStats stats;
  double skill = 0.0;
};

struct TrendRow {
  std::string station;
  int duration_h = 0;
  std::string period;
  std::string source_tag;
  std::size_t n = 0;
  TrendResult result;
};

struct FitRow {
  std::string station;
  int duration_h = 0;
  std::string period;
  std::string source_tag;
  ModelKind model_kind = ModelKind::stationary;
  GevParams median;
  double aicc = 0.0;
  double max_rhat = 0.0;
  int iterations = 0;
  std::uint64_t seed = 0;
};

struct StagedSeries {
  std::string stage;  // raw or corrected
  AnnualMaxSeries series;
};

// ---------------------------------------------------------------------------
// Table writers

inline void write_idf_csv(std::ostream& out, const std::vector<IdfRow>& rows) {
  csv::Writer w(out);
  w.row("station", "duration_h", "return_period_y", "period", "source_tag", "model_kind", "q05", "q50", "q95");
  for (const auto& r : rows) {
    w.row(r.station, r.duration_h, r.return_period_y, r.period, r.source_tag, to_string(r.model_kind), r.q05, r.q50,
          r.q95);
  }
}

inline void write_change_csv(std::ostream& out, const std::vector<ChangeRow>& rows) {
  csv::Writer w(out);
  w.row("station", "duration_h", "return_period_y", "comparison_case", "baseline_q50", "future_q50", "percent_change",
        "z", "significant_5pct", "significant_10pct");
  for (const auto& r : rows) {
    w.row(r.station, r.duration_h, r.return_period_y, r.comparison_case, r.baseline_q50, r.future_q50, r.percent_change,
          r.significance.z, r.significance.significant_5pct, r.significance.significant_10pct);
  }
}

inline void write_skill_csv(std::ostream& out, const std::vector<SkillRow>& rows) {
  csv::Writer w(out);
  w.row("station", "duration_h", "stage", "source_tag", "normalized_std", "pattern_corr", "centered_rmse", "r0",
        "std_model", "std_obs", "skill");
  for (const auto& r : rows) {
    w.row(r.station, r.duration_h, r.stage, r.source_tag, r.stats.normalized_std, r.stats.pattern_corr,
          r.stats.centered_rmse, r.stats.r0, r.stats.std_model, r.stats.std_obs, r.skill);
  }
}

inline void write_trend_csv(std::ostream& out, const std::vector<TrendRow>& rows) {
  csv::Writer w(out);
  w.row("station", "duration_h", "period", "source_tag", "n", "s", "variance_s", "z", "p_value", "sen_slope_per_decade",
        "significant_10pct", "autocorrelation_factor");
  for (const auto& r : rows) {
    w.row(r.station, r.duration_h, r.period, r.source_tag, r.n, r.result.s_statistic, r.result.variance_s, r.result.z,
          r.result.p_value, r.result.sen_slope_per_decade, r.result.significant_10pct, r.result.autocorrelation_factor);
  }
}

inline void write_fit_csv(std::ostream& out, const std::vector<FitRow>& rows) {
  csv::Writer w(out);
  w.row("station", "duration_h", "period", "source_tag", "model_kind", "mu0", "mu1", "sigma", "xi", "aicc", "max_rhat",
        "iterations", "seed");
  for (const auto& r : rows) {
    w.row(r.station, r.duration_h, r.period, r.source_tag, to_string(r.model_kind), r.median.mu0, r.median.mu1,
          r.median.sigma, r.median.xi, r.aicc, r.max_rhat, r.iterations, std::to_string(r.seed));
  }
}

/// Annual-maximum CSV with an extra `stage` column; readable by read_annual_max_csv.
inline void write_staged_annual_max_csv(std::ostream& out, const std::vector<StagedSeries>& series) {
  csv::Writer w(out);
  w.row("station_id", "duration_h", "year", "intensity_mm_per_h", "source_tag", "stage");
  for (const auto& [stage, s] : series) {
    for (const auto& e : s.entries()) w.row(s.station_id(), s.duration_h(), e.year, e.intensity, s.source_tag(), stage);
    for (int g : s.gap_years()) w.row(s.station_id(), s.duration_h(), g, "", s.source_tag(), stage);
  }
}

/// Fit summary row for one posterior.
inline FitRow fit_row(const std::string& period, const AnnualMaxSeries& data, const GevPosterior& post) {
  FitRow r{data.station_id(), data.duration_h(), period, data.source_tag(), post.kind, post.median_params(),
           aicc(data, post), 0.0, post.diagnostics.iterations, post.seed};
  for (double h : post.diagnostics.rhat) r.max_rhat = std::max(r.max_rhat, h);
  return r;
}

/// The three baseline/future comparisons for one return period.
inline constexpr std::array<std::tuple<const char*, ModelKind, ModelKind>, 3> kComparisonCases{{
    {"sta-vs-sta", ModelKind::stationary, ModelKind::stationary},
    {"nonsta-vs-sta", ModelKind::nonstationary, ModelKind::stationary},
    {"nonsta-vs-nonsta", ModelKind::nonstationary, ModelKind::nonstationary},
}};

/// Change rows from baseline and future posteriors keyed by model kind.
inline std::vector<ChangeRow> change_rows(const std::string& station, int duration_h,
                                          const std::map<ModelKind, GevPosterior>& baseline,
                                          const std::map<ModelKind, GevPosterior>& future,
                                          const std::vector<double>& return_periods_y) {
  std::vector<ChangeRow> rows;
  for (const auto& [name, future_kind, baseline_kind] : kComparisonCases) {
    const auto& fp = future.at(future_kind);
    const auto& bp = baseline.at(baseline_kind);
    for (double T : return_periods_y) {
      const auto f = return_level(fp, T), b = return_level(bp, T);
      rows.push_back({station, duration_h, T, name, b.q50, f.q50, percent_change(f.q50, b.q50), change_z(f, b)});
    }
  }
  return rows;
}

struct CellFailure {
  std::string station;
  int duration_h = 0;  // 0 when the whole station failed during preparation
  std::string stage;
  std::string message;
};

struct MethodChoice {
  std::string station;
  int duration_h = 0;
  QmMethod method = QmMethod::gev;
  std::optional<double> skill_gev;
  std::optional<double> skill_kde;
};

struct CellResult {
  std::string station;
  int duration_h = 0;
  std::optional<CellFailure> failure;
  std::vector<IdfRow> idf;
  std::vector<ChangeRow> change;
  std::vector<SkillRow> skill;
  std::vector<TrendRow> trend;
  std::vector<FitRow> fits;
  std::vector<StagedSeries> annual_max;
  DensityTable density;
  std::optional<MethodChoice> method;
  std::vector<std::string> warnings;
  std::vector<std::string> equiratio_fallbacks;  // model names
};

/// Per-station inputs to the cell stage: maxima only, fine series are dropped.
struct StationData {
  std::string id;
  CascadeParams cascade;
  std::map<int, AnnualMaxSeries> observed;            // baseline window
  std::map<int, std::vector<AnnualMaxSeries>> model_baseline;
  std::map<int, std::vector<AnnualMaxSeries>> model_future;
  std::vector<std::string> warnings;
};

namespace detail {

inline DepthSeries restrict_to_windows(const DepthSeries& s, const YearWindow& a, const YearWindow& b) {
  std::vector<DepthRecord> kept;
  for (const auto& r : s.records()) {
    if (a.contains(r.stamp.year) || b.contains(r.stamp.year)) kept.push_back(r);
  }
  return DepthSeries(s.station_id(), s.resolution_s(), std::move(kept), s.calendar());
}

/// Inserts disaggregated, GEV-adjusted maxima into the gap years of `observed`.
inline AnnualMaxSeries fill_observed_gaps(const AnnualMaxSeries& observed, const AnnualMaxSeries& disagg) {
  if (observed.gap_years().empty()) return observed;
  const auto adjusted = adjust_disaggregated_extremes(disagg, observed);
  std::map<int, double> by_year;
  for (const auto& e : observed.entries()) by_year[e.year] = e.intensity;
  std::vector<int> gaps;
  for (int g : observed.gap_years()) {
    const auto it = std::find_if(adjusted.entries().begin(), adjusted.entries().end(),
                                 [g](const AnnualMax& e) { return e.year == g; });
    if (it != adjusted.entries().end()) {
      by_year[g] = it->intensity;
    } else {
      gaps.push_back(g);
    }
  }
  std::vector<AnnualMax> entries;
  for (const auto& [year, v] : by_year) entries.push_back({year, v});
  return AnnualMaxSeries(observed.station_id(), observed.duration_h(), std::move(entries), observed.source_tag(), gaps);
}

}  // namespace detail

/// Calibrates the cascade on observed hourly data, extracts observed maxima and
/// disaggregates every model's daily series into maxima for both windows.
inline StationData prepare_station(const StudyConfig& config, const StationInput& input) {
  StationData data;
  data.id = input.id;
  const auto hourly = load_depth_csv(config.resolve(input.observed_hourly).string(), 3600);
  if (hourly.station_id() != input.id) {
    throw ValidationError("observed hourly file holds station '" + hourly.station_id() + "', expected '" + input.id + "'");
  }
  data.cascade = calibrate(hourly, config.cascade_steps);
  for (const auto& w : data.cascade.warnings) data.warnings.push_back(input.id + ": cascade: " + w);
  const int fine_s = data.cascade.output_resolution_s();

  std::optional<DepthSeries> obs_fine;
  if (!input.observed_daily.empty()) {
    const auto daily = apply_wet_threshold(load_depth_csv(config.resolve(input.observed_daily).string(), kSecondsPerDay),
                                           config.wet_threshold_mm);
    obs_fine = disaggregate(daily, data.cascade, derive_seed(config.master_seed, input.id, "observed", "disagg"));
  }
  for (int d : config.durations_h) {
    auto am = extract_annual_max(hourly, d).window(config.baseline.first, config.baseline.last);
    if (obs_fine) am = detail::fill_observed_gaps(am, interpolate_resolution(*obs_fine, d * 3600));
    data.observed.emplace(d, std::move(am));
  }

  for (const auto& m : input.models) {
    auto daily = load_depth_csv(config.resolve(m.daily).string(), kSecondsPerDay, m.calendar);
    daily = detail::restrict_to_windows(apply_wet_threshold(daily, config.wet_threshold_mm), config.baseline,
                                        config.future);
    const auto fine = disaggregate(daily, data.cascade, derive_seed(config.master_seed, input.id, m.name, "disagg"));
    if (fine.resolution_s() != fine_s) throw ContractError("unexpected disaggregation resolution");
    for (int d : config.durations_h) {
      const auto am = interpolate_resolution(fine, d * 3600, "model:" + m.name);
      data.model_baseline[d].push_back(am.window(config.baseline.first, config.baseline.last));
      data.model_future[d].push_back(am.window(config.future.first, config.future.last));
    }
  }
  return data;
}

namespace detail {

inline std::vector<AnnualMaxSeries> correct_historical(const std::vector<AnnualMaxSeries>& raw,
                                                       const AnnualMaxSeries& obs, QmMethod method) {
  std::vector<AnnualMaxSeries> out;
  for (const auto& m : raw) out.push_back(qm_historical(m, obs, method));
  return out;
}

/// MM-Med skill of a historical correction; nullopt if the method fails.
inline std::optional<double> correction_skill(const std::vector<AnnualMaxSeries>& raw, const AnnualMaxSeries& obs,
                                              QmMethod method) {
  try {
    const EnsembleSet corrected(correct_historical(raw, obs, method));
    return skill_score(taylor_stats(ensemble_stats(corrected).mm_med, obs, corrected));
  } catch (const Error&) {
    return std::nullopt;
  }
}

inline SkillRow skill_row(const std::string& station, int d, const std::string& stage, const AnnualMaxSeries& s,
                          const AnnualMaxSeries& obs, const EnsembleSet& ens) {
  SkillRow r{station, d, stage, s.source_tag(), taylor_stats(s, obs, ens), 0.0};
  r.skill = skill_score(r.stats);
  return r;
}

}  // namespace detail

/// Bias correction, ensemble statistics, skill, trends, GEV fits, return levels
/// and change statistics for one station and duration. Errors are caught and
/// reported in `failure`.
inline CellResult run_cell(const StudyConfig& config, const StationData& data, int duration_h) {
  CellResult cell;
  cell.station = data.id;
  cell.duration_h = duration_h;
  std::string stage = "inputs";
  try {
    const auto& obs = data.observed.at(duration_h);
    const auto raw_hist = align_on_common_years(data.model_baseline.at(duration_h));
    const auto raw_fut = align_on_common_years(data.model_future.at(duration_h));
    const std::string& st = data.id;
    const int d = duration_h;

    stage = "method selection";
    QmMethod method = QmMethod::gev;
    if (config.bias_method == "auto") {
      MethodChoice choice{st, d, QmMethod::gev, detail::correction_skill(raw_hist, obs, QmMethod::gev),
                          detail::correction_skill(raw_hist, obs, QmMethod::kde)};
      if (choice.skill_kde && (!choice.skill_gev || *choice.skill_kde > *choice.skill_gev)) choice.method = QmMethod::kde;
      method = choice.method;
      cell.method = choice;
    } else {
      method = parse_qm_method(config.bias_method);
      cell.method = MethodChoice{st, d, method, std::nullopt, std::nullopt};
    }

    stage = "historical correction";
    const auto hist = detail::correct_historical(raw_hist, obs, method);
    stage = "projected correction";
    std::vector<AnnualMaxSeries> fut;
    for (std::size_t m = 0; m < raw_fut.size(); ++m) {
      auto pc = eqm_projected(raw_fut[m], raw_hist[m], obs, method);
      if (pc.equiratio_fallback) {
        const std::string name = raw_fut[m].source_tag().substr(6);
        cell.equiratio_fallbacks.push_back(name);
        cell.warnings.push_back(st + " " + std::to_string(d) + "h: " + name + ": equidistant mapping went non-positive; equiratio used");
      }
      fut.push_back(std::move(pc.series));
    }

    stage = "ensemble statistics";
    const EnsembleSet raw_ens(raw_hist), hist_ens(hist), fut_ens(fut);
    const auto hist_stats = ensemble_stats(hist_ens);
    const auto fut_stats = ensemble_stats(fut_ens);

    cell.annual_max.push_back({"raw", obs});
    for (const auto& s : raw_hist) cell.annual_max.push_back({"raw", s});
    for (const auto& s : raw_fut) cell.annual_max.push_back({"raw", s});
    for (const auto& s : hist) cell.annual_max.push_back({"corrected", s});
    for (const auto& s : fut) cell.annual_max.push_back({"corrected", s});
    for (const auto* s : {&hist_stats.mm_min, &hist_stats.mm_med, &hist_stats.mm_max, &fut_stats.mm_min,
                          &fut_stats.mm_med, &fut_stats.mm_max}) {
      cell.annual_max.push_back({"corrected", *s});
    }

    stage = "skill";
    for (const auto& s : raw_hist) cell.skill.push_back(detail::skill_row(st, d, "raw", s, obs, raw_ens));
    for (const auto& s : hist) cell.skill.push_back(detail::skill_row(st, d, "corrected", s, obs, hist_ens));
    for (const auto* s : {&hist_stats.mm_min, &hist_stats.mm_med, &hist_stats.mm_max}) {
      cell.skill.push_back(detail::skill_row(st, d, "corrected", *s, obs, hist_ens));
    }

    stage = "trend";
    const std::vector<std::pair<std::string, const AnnualMaxSeries*>> trend_inputs{
        {"baseline", &obs}, {"baseline", &hist_stats.mm_med}, {"future", &fut_stats.mm_med}};
    for (const auto& [period, s] : trend_inputs) {
      const auto yv = year_values(*s);
      cell.trend.push_back({st, d, period, s->source_tag(), yv.size(), mann_kendall(yv)});
    }

    stage = "gev fits";
    struct FitInput {
      std::string period;
      const AnnualMaxSeries* data;
    };
    const std::vector<FitInput> fit_inputs{{"baseline", &obs},
                                           {"baseline", &hist_stats.mm_min},
                                           {"baseline", &hist_stats.mm_med},
                                           {"baseline", &hist_stats.mm_max},
                                           {"future", &fut_stats.mm_min},
                                           {"future", &fut_stats.mm_med},
                                           {"future", &fut_stats.mm_max}};
    std::map<ModelKind, GevPosterior> med_baseline, med_future;
    for (const auto& in : fit_inputs) {
      for (ModelKind kind : {ModelKind::stationary, ModelKind::nonstationary}) {
        const std::string& tag = in.data->source_tag();
        const auto seed = derive_seed(config.master_seed, st, d, "fit", in.period, tag, to_string(kind));
        auto post = fit_demc(*in.data, kind, config.sampler, seed);
        cell.fits.push_back(fit_row(in.period, *in.data, post));
        for (double T : config.return_periods_y) {
          const auto rl = return_level(post, T);
          cell.idf.push_back({st, d, T, in.period, tag, kind, rl.q05, rl.q50, rl.q95});
        }
        if (tag == "mm-med") (in.period == "baseline" ? med_baseline : med_future).emplace(kind, std::move(post));
      }
    }

    stage = "change";
    cell.change = change_rows(st, d, med_baseline, med_future, config.return_periods_y);

    stage = "density";
    std::vector<NamedSample> samples{{"baseline:observed", obs.values()}};
    for (const auto& s : hist) samples.push_back({"baseline:" + s.source_tag(), s.values()});
    samples.push_back({"baseline:mm-med", hist_stats.mm_med.values()});
    samples.push_back({"future:mm-med", fut_stats.mm_med.values()});
    cell.density = emit_density_data(samples);
    for (const auto& w : cell.density.warnings) cell.warnings.push_back(st + " " + std::to_string(d) + "h: " + w);
  } catch (const std::exception& e) {
    cell.failure = CellFailure{data.id, duration_h, stage, e.what()};
  }
  return cell;
}

struct RunSummary {
  std::uint64_t master_seed = 0;
  std::size_t cells_total = 0;
  std::vector<CellFailure> failures;
  std::vector<std::string> warnings;
  std::vector<MethodChoice> method_choices;
  std::vector<std::string> equiratio_fallbacks;

  std::size_t cells_failed() const noexcept {
    std::size_t n = 0;
    for (const auto& f : failures) n += f.duration_h == 0 ? 0 : 1;
    return n;
  }
  /// 0 when every cell succeeded, 2 when some did, 1 when none did.
  int exit_code() const noexcept {
    if (failures.empty()) return 0;
    return cells_failed() < cells_total ? 2 : 1;
  }
};

/// Runs `fn(i)` for i in [0, count) on at most `workers` threads. `fn` must not throw.
template <class Fn>
void parallel_for(std::size_t count, int workers, Fn&& fn) {
  const auto n_threads = std::min<std::size_t>(count, static_cast<std::size_t>(std::max(1, workers)));
  if (n_threads <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::jthread> pool;
  for (std::size_t t = 0; t < n_threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) fn(i);
    });
  }
}

inline int resolve_workers(int configured) {
  if (configured > 0) return configured;
  return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

namespace detail {

inline std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  return out;
}

template <class Row, class Fn>
std::vector<Row> gather(const std::vector<CellResult>& cells, Fn member) {
  std::vector<Row> out;
  for (const auto& c : cells) {
    const auto& rows = c.*member;
    out.insert(out.end(), rows.begin(), rows.end());
  }
  return out;
}

inline void write_outputs(const std::filesystem::path& out_dir, const StudyConfig& config,
                          const std::vector<StationData>& stations, const std::vector<CellResult>& cells,
                          const RunSummary& summary) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir / "density");
  fs::create_directories(out_dir / "cascade");
  {
    auto out = open_output(out_dir / "idf_table.csv");
    write_idf_csv(out, gather<IdfRow>(cells, &CellResult::idf));
  }
  {
    auto out = open_output(out_dir / "change_report.csv");
    write_change_csv(out, gather<ChangeRow>(cells, &CellResult::change));
  }
  {
    auto out = open_output(out_dir / "skill.csv");
    write_skill_csv(out, gather<SkillRow>(cells, &CellResult::skill));
  }
  {
    auto out = open_output(out_dir / "trend.csv");
    write_trend_csv(out, gather<TrendRow>(cells, &CellResult::trend));
  }
  {
    auto out = open_output(out_dir / "gev_fits.csv");
    write_fit_csv(out, gather<FitRow>(cells, &CellResult::fits));
  }
  {
    auto out = open_output(out_dir / "annual_max.csv");
    write_staged_annual_max_csv(out, gather<StagedSeries>(cells, &CellResult::annual_max));
  }
  for (const auto& c : cells) {
    if (c.failure || c.density.grid.empty()) continue;
    auto out = open_output(out_dir / "density" / (c.station + "_" + std::to_string(c.duration_h) + "h.csv"));
    write_density_csv(out, c.density);
  }
  for (const auto& s : stations) {
    if (s.id.empty()) continue;
    auto out = open_output(out_dir / "cascade" / (s.id + ".json"));
    out << to_json(s.cascade).dump(2) << '\n';
  }

  nlohmann::json failures = nlohmann::json::array();
  for (const auto& f : summary.failures) {
    failures.push_back({{"station", f.station}, {"duration_h", f.duration_h}, {"stage", f.stage}, {"message", f.message}});
  }
  nlohmann::json methods = nlohmann::json::array();
  for (const auto& m : summary.method_choices) {
    nlohmann::json j = {{"station", m.station}, {"duration_h", m.duration_h}, {"method", to_string(m.method)}};
    if (m.skill_gev) j["skill_gev"] = *m.skill_gev;
    if (m.skill_kde) j["skill_kde"] = *m.skill_kde;
    methods.push_back(std::move(j));
  }
  const nlohmann::json run = {{"master_seed", summary.master_seed},
                              {"config", to_json(config)},
                              {"cells_total", summary.cells_total},
                              {"cells_failed", summary.cells_failed()},
                              {"failures", failures},
                              {"warnings", summary.warnings},
                              {"method_choices", methods},
                              {"equiratio_fallbacks", summary.equiratio_fallbacks}};
  auto out = open_output(out_dir / "run_summary.json");
  out << run.dump(2) << '\n';
}

}  // namespace detail

/// Full study. Configuration and output errors throw; station and cell errors
/// are recorded in the summary and the remaining work continues.
inline RunSummary run_pipeline(const StudyConfig& config, const std::filesystem::path& out_dir) {
  config.validate();
  const int workers = resolve_workers(config.workers);
  std::vector<int> durations = config.durations_h;
  std::sort(durations.begin(), durations.end());
  durations.erase(std::unique(durations.begin(), durations.end()), durations.end());

  RunSummary summary;
  summary.master_seed = config.master_seed;
  summary.cells_total = config.stations.size() * durations.size();

  std::vector<StationData> stations(config.stations.size());
  std::vector<std::optional<CellFailure>> station_failures(config.stations.size());
  parallel_for(config.stations.size(), workers, [&](std::size_t i) {
    try {
      stations[i] = prepare_station(config, config.stations[i]);
    } catch (const std::exception& e) {
      station_failures[i] = CellFailure{config.stations[i].id, 0, "prepare", e.what()};
    }
  });

  std::vector<CellResult> cells(summary.cells_total);
  parallel_for(cells.size(), workers, [&](std::size_t k) {
    const std::size_t s = k / durations.size();
    const int d = durations[k % durations.size()];
    if (station_failures[s]) {
      cells[k].station = config.stations[s].id;
      cells[k].duration_h = d;
      cells[k].failure = CellFailure{config.stations[s].id, d, "prepare", station_failures[s]->message};
      return;
    }
    cells[k] = run_cell(config, stations[s], d);
  });

  for (std::size_t s = 0; s < stations.size(); ++s) {
    if (station_failures[s]) summary.failures.push_back(*station_failures[s]);
    summary.warnings.insert(summary.warnings.end(), stations[s].warnings.begin(), stations[s].warnings.end());
  }
  for (const auto& c : cells) {
    if (c.failure) summary.failures.push_back(*c.failure);
    summary.warnings.insert(summary.warnings.end(), c.warnings.begin(), c.warnings.end());
    if (c.method && !c.failure) summary.method_choices.push_back(*c.method);
    for (const auto& m : c.equiratio_fallbacks) {
      summary.equiratio_fallbacks.push_back(c.station + "/" + std::to_string(c.duration_h) + "h/" + m);
    }
  }
  // A failed cell contributes no table rows.
  for (auto& c : cells) {
    if (!c.failure) continue;
    c.idf.clear();
    c.change.clear();
    c.skill.clear();
    c.trend.clear();
    c.fits.clear();
    c.annual_max.clear();
  }
  detail::write_outputs(out_dir, config, stations, cells, summary);
  return summary;
}

}  // namespace idf
