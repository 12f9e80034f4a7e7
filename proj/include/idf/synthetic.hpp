#pragma once

// Synthetic rainfall generators for tests, demos and the acceptance study.

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "idf/error.hpp"
#include "idf/random.hpp"
#include "idf/series.hpp"

namespace idf::synth {

/// Amount multiplier applied to the years of one window.
struct WindowScaling {
  int first_year = 0;
  int last_year = 0;
  double factor = 1.0;
};

/// Two-state Markov occurrence with gamma wet-day amounts.
struct RainfallClimate {
  double p_wet_after_dry = 0.25;
  double p_wet_after_wet = 0.55;
  double mean_wet_day_mm = 6.5;
  double amount_shape = 0.75;
  double multiplier = 1.0;          // constant bias factor
  double trend_per_year = 0.0;      // relative amount change per year since trend_origin_year
  int trend_origin_year = 1970;
  std::optional<WindowScaling> scaling;
};

namespace detail {

inline double day_amount(const RainfallClimate& c, int year, Philox4x32& rng) {
  double a = c.mean_wet_day_mm / c.amount_shape * gamma_variate(rng, c.amount_shape);
  a *= c.multiplier * std::max(0.0, 1.0 + c.trend_per_year * (year - c.trend_origin_year));
  if (c.scaling && year >= c.scaling->first_year && year <= c.scaling->last_year) a *= c.scaling->factor;
  return a;
}

template <class Emit>
void walk_days(const std::string& station, int first_year, int last_year, const RainfallClimate& c, std::uint64_t seed,
               Calendar calendar, Emit&& emit) {
  if (last_year < first_year) throw ContractError("synthetic series needs first_year <= last_year");
  Philox4x32 rng(derive_seed(seed, station, "daily"));
  bool wet = false;
  for (int y = first_year; y <= last_year; ++y) {
    const int days = days_in_year(calendar, y);
    for (int d = 1; d <= days; ++d) {
      wet = rng.uniform() < (wet ? c.p_wet_after_wet : c.p_wet_after_dry);
      emit(y, d, wet ? day_amount(c, y, rng) : 0.0, rng);
    }
  }
}

}  // namespace detail

inline DepthSeries daily_series(const std::string& station, int first_year, int last_year, const RainfallClimate& c,
                                std::uint64_t seed, Calendar calendar = Calendar::gregorian) {
  std::vector<DepthRecord> recs;
  detail::walk_days(station, first_year, last_year, c, seed, calendar,
                    [&](int y, int d, double depth, Philox4x32&) { recs.push_back({{y, d, 0}, depth}); });
  return DepthSeries(station, kSecondsPerDay, std::move(recs), calendar);
}

/// Hourly series: each wet day is one storm of contiguous wet hours with
/// gamma-distributed hourly shares.
inline DepthSeries hourly_series(const std::string& station, int first_year, int last_year, const RainfallClimate& c,
                                 std::uint64_t seed, Calendar calendar = Calendar::gregorian) {
  std::vector<DepthRecord> recs;
  std::array<double, 24> hours{};
  detail::walk_days(station, first_year, last_year, c, seed, calendar, [&](int y, int d, double depth, Philox4x32& rng) {
    hours.fill(0.0);
    if (depth > 0.0) {
      const int length = std::min(24, 1 + static_cast<int>(exponential_variate(rng, 4.0)));
      const int start = static_cast<int>(rng.uniform() * (25 - length));
      double total = 0.0;
      for (int h = start; h < start + length; ++h) total += hours[static_cast<std::size_t>(h)] = gamma_variate(rng, 0.8) + 1e-6;
      for (int h = start; h < start + length; ++h) hours[static_cast<std::size_t>(h)] *= depth / total;
    }
    for (int h = 0; h < 24; ++h) recs.push_back({{y, d, h * 3600}, hours[static_cast<std::size_t>(h)]});
  });
  return DepthSeries(station, 3600, std::move(recs), calendar);
}

/// Same boxes relabelled `offset` years later. Day counts must match per year.
inline DepthSeries shift_years(const DepthSeries& s, int offset) {
  std::vector<DepthRecord> recs = s.records();
  for (auto& r : recs) {
    r.stamp.year += offset;
    if (r.stamp.day_of_year > days_in_year(s.calendar(), r.stamp.year)) {
      throw ContractError("shift_years: leap-year pattern differs after the shift");
    }
  }
  return DepthSeries(s.station_id(), s.resolution_s(), std::move(recs), s.calendar());
}

/// Concatenates two series of one station and resolution; `b` must start after `a`.
inline DepthSeries concat(const DepthSeries& a, const DepthSeries& b) {
  if (a.station_id() != b.station_id() || a.resolution_s() != b.resolution_s()) {
    throw ContractError("concat needs matching station and resolution");
  }
  auto recs = a.records();
  recs.insert(recs.end(), b.records().begin(), b.records().end());
  return DepthSeries(a.station_id(), a.resolution_s(), std::move(recs), a.calendar());
}

struct StudyOptions {
  int stations = 8;
  int models = 3;
  std::uint64_t seed = 1;
  int baseline_first = 1970;
  int baseline_last = 2010;
  int future_first = 2030;
  int future_last = 2070;
  double future_factor = 1.0;  // scales model amounts in the future window
  std::vector<int> durations_h{1, 2, 6, 12, 24};
  std::vector<double> return_periods_y{2, 5, 10, 25, 50};
};

/// Writes observed hourly and model daily CSVs plus `study.json` under `dir`.
/// Returns the path of the config file.
inline std::filesystem::path write_study(const std::filesystem::path& dir, const StudyOptions& o) {
  namespace fs = std::filesystem;
  if (o.stations < 1 || o.models < 1) throw ContractError("synthetic study needs at least one station and one model");
  fs::create_directories(dir / "data");
  nlohmann::json stations = nlohmann::json::array();
  for (int s = 0; s < o.stations; ++s) {
    const std::string id = "ST" + std::to_string(s + 1);
    RainfallClimate obs;
    obs.mean_wet_day_mm = 5.5 + 0.4 * s;
    obs.p_wet_after_dry = 0.22 + 0.01 * s;
    const auto hourly = hourly_series(id, o.baseline_first, o.baseline_last, obs, derive_seed(o.seed, id, "observed"));
    const std::string obs_file = "data/" + id + "_obs_hourly.csv";
    save_depth_csv((dir / obs_file).string(), hourly);

    nlohmann::json models = nlohmann::json::array();
    for (int m = 0; m < o.models; ++m) {
      const std::string name = "RCM" + std::to_string(m + 1);
      RainfallClimate mc = obs;
      mc.multiplier = 0.8 + 0.2 * m;
      mc.amount_shape = 0.65 + 0.05 * m;
      mc.scaling = WindowScaling{o.future_first, o.future_last, o.future_factor};
      const auto daily =
          daily_series(id, o.baseline_first, o.future_last, mc, derive_seed(o.seed, id, "model", name));
      const std::string file = "data/" + id + "_" + name + "_daily.csv";
      save_depth_csv((dir / file).string(), daily);
      models.push_back({{"name", name}, {"daily", file}});
    }
    stations.push_back({{"id", id}, {"observed_hourly", obs_file}, {"models", models}});
  }
  const nlohmann::json config = {
      {"baseline_window", {o.baseline_first, o.baseline_last}},
      {"future_window", {o.future_first, o.future_last}},
      {"durations_h", o.durations_h},
      {"return_periods_y", o.return_periods_y},
      {"bias_method", "auto"},
      {"wet_threshold_mm", kWetThresholdMm},
      {"cascade_steps", 5},
      {"master_seed", o.seed},
      {"stations", stations}};
  const auto path = dir / "study.json";
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << config.dump(2) << '\n';
  return path;
}

}  // namespace idf::synth
