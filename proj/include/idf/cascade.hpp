#pragma once

// Micro-canonical multiplicative random cascade for temporal disaggregation.
//
// A wet box of volume V is split into halves W*V and (1-W)*V. With probability
// P01 the split is degenerate (W in {0,1}); otherwise W is drawn from a
// symmetric Beta(a, a). P01 is conditioned on the cascade step, the box
// position in the rain sequence and its volume class (terciles of wet-box
// volumes at that step). Step 1 splits the day; step k splits boxes of
// 24 / 2^(k-1) hours.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "idf/bias.hpp"
#include "idf/error.hpp"
#include "idf/numeric.hpp"
#include "idf/random.hpp"
#include "idf/series.hpp"

namespace idf {

enum class Position { starting = 0, enclosed = 1, ending = 2, isolated = 3 };

inline constexpr std::array<Position, 4> kPositions{Position::starting, Position::enclosed, Position::ending,
                                                    Position::isolated};

inline std::string to_string(Position p) {
  switch (p) {
    case Position::starting: return "starting";
    case Position::enclosed: return "enclosed";
    case Position::ending: return "ending";
    case Position::isolated: return "isolated";
  }
  return "unknown";
}

inline Position position_from_neighbors(bool previous_wet, bool next_wet) noexcept {
  if (previous_wet) return next_wet ? Position::enclosed : Position::ending;
  return next_wet ? Position::starting : Position::isolated;
}

/// Position class of the wet box at `index`; the series edges count as dry.
inline Position classify_position(std::span<const double> volumes, std::size_t index) {
  if (index >= volumes.size()) throw ContractError("classify_position: index out of range");
  if (!(volumes[index] > 0.0)) throw ContractError("classify_position: box is dry");
  const bool previous_wet = index > 0 && volumes[index - 1] > 0.0;
  const bool next_wet = index + 1 < volumes.size() && volumes[index + 1] > 0.0;
  return position_from_neighbors(previous_wet, next_wet);
}

struct CascadeCell {
  double p01 = 0.0;
  std::size_t samples = 0;  // 0 means the value was inherited
};

struct CascadeStep {
  std::array<std::array<CascadeCell, 3>, 4> cells{};  // [position][volume class - 1]
  double pooled_p01 = 0.0;
  std::size_t samples = 0;
  double volume_q33 = 0.0;  // mm
  double volume_q67 = 0.0;
  bool observed = false;  // false when filled from the scaling law
};

struct CascadeParams {
  int steps = 5;
  std::vector<CascadeStep> table;  // table[k] is step k + 1
  double scaling_c1 = 0.0;         // Pr01(r) = c1 * r^c2, r = parent box length in hours
  double scaling_c2 = 0.0;
  double px_intercept = 1.0;       // P(x/x) = a + b_m * volume_class
  double px_slope = 0.0;
  double beta_shape = 1.0;
  double half_split_prob = 0.5;
  std::vector<std::string> warnings;

  int output_resolution_s() const { return kSecondsPerDay >> steps; }

  static double parent_hours(int step) { return 24.0 / std::ldexp(1.0, step - 1); }

  void validate() const {
    if (steps < 1 || steps > 7) throw ContractError("cascade steps must be between 1 and 7");
    if (table.size() != static_cast<std::size_t>(steps)) throw ContractError("cascade table does not match step count");
    if (!(beta_shape > 0.0) || !std::isfinite(beta_shape)) throw ContractError("beta shape must be positive");
    if (!(half_split_prob >= 0.0 && half_split_prob <= 1.0)) throw ContractError("half_split_prob outside [0,1]");
    for (const auto& step : table) {
      for (const auto& row : step.cells) {
        for (const auto& cell : row) {
          if (!(cell.p01 >= 0.0 && cell.p01 <= 1.0)) throw ContractError("P01 outside [0,1]");
        }
      }
    }
  }

  const CascadeStep& at(int step) const {
    if (step < 1 || step > steps) throw ContractError("cascade step out of range");
    return table[static_cast<std::size_t>(step - 1)];
  }

  int volume_class(int step, double volume) const {
    const auto& s = at(step);
    if (volume <= s.volume_q33) return 1;
    if (volume <= s.volume_q67) return 2;
    return 3;
  }

  double p01(int step, Position position, int volume_class) const {
    if (volume_class < 1 || volume_class > 3) throw ContractError("volume class must be 1, 2 or 3");
    return at(step).cells[static_cast<std::size_t>(position)][static_cast<std::size_t>(volume_class - 1)].p01;
  }

  double scaling_p01(double parent_hours_value) const {
    return std::clamp(scaling_c1 * std::pow(parent_hours_value, scaling_c2), 0.0, 1.0);
  }

  double px_regression(int volume_class) const {
    return std::clamp(px_intercept + px_slope * volume_class, 0.0, 1.0);
  }
};

struct CalibrationOptions {
  int min_years = 35;
  double beta_shape_floor = 0.05;
  double beta_shape_cap = 1e6;  // used when interior weights show no spread
};

namespace detail {

struct DayBoxes {
  SeriesStamp day;  // second_of_day = 0
  long long ordinal = 0;
  std::vector<double> boxes;
  bool complete = false;
};

inline std::vector<DayBoxes> group_days(const DepthSeries& s) {
  std::vector<DayBoxes> days;
  const int per_day = s.boxes_per_day();
  for (const auto& r : s.records()) {
    if (days.empty() || days.back().day.year != r.stamp.year || days.back().day.day_of_year != r.stamp.day_of_year) {
      DayBoxes d;
      d.day = {r.stamp.year, r.stamp.day_of_year, 0};
      d.ordinal = day_ordinal(s.calendar(), r.stamp.year, r.stamp.day_of_year);
      d.boxes.assign(static_cast<std::size_t>(per_day), -1.0);
      days.push_back(std::move(d));
    }
    days.back().boxes[static_cast<std::size_t>(r.stamp.second_of_day / s.resolution_s())] = r.depth_mm;
  }
  for (auto& d : days) {
    d.complete = std::none_of(d.boxes.begin(), d.boxes.end(), [](double v) { return v < 0.0; });
    for (auto& v : d.boxes) v = std::max(v, 0.0);
  }
  return days;
}

inline std::map<long long, double> daily_totals_by_ordinal(const std::vector<DayBoxes>& days) {
  std::map<long long, double> out;
  for (const auto& d : days) {
    double total = 0.0;
    for (double v : d.boxes) total += v;
    out[d.ordinal] = total;
  }
  return out;
}

inline bool neighbor_day_wet(const std::map<long long, double>& totals, long long ordinal) {
  const auto it = totals.find(ordinal);
  return it != totals.end() && it->second > 0.0;
}

}  // namespace detail

/// Estimates cascade statistics from a series whose resolution divides the
/// cascade's finest observable box. Only complete days are used. Steps whose
/// children are finer than the input resolution take P01 from the fitted
/// scaling law.
inline CascadeParams calibrate(const DepthSeries& fine, int steps = 5, const CalibrationOptions& options = {}) {
  if (steps < 1 || steps > 7) throw ContractError("cascade steps must be between 1 and 7");
  const int res = fine.resolution_s();
  const auto days = detail::group_days(fine);
  std::vector<const detail::DayBoxes*> complete;
  std::vector<int> years;
  for (const auto& d : days) {
    if (!d.complete) continue;
    complete.push_back(&d);
    if (years.empty() || years.back() != d.day.year) years.push_back(d.day.year);
  }
  if (static_cast<int>(years.size()) < options.min_years) {
    throw ContractError("calibration needs at least " + std::to_string(options.min_years) +
                        " years of complete sub-daily data, got " + std::to_string(years.size()));
  }
  const auto totals = detail::daily_totals_by_ordinal(days);

  CascadeParams params;
  params.steps = steps;
  params.table.resize(static_cast<std::size_t>(steps));

  struct Split {
    Position position;
    int volume_class;
    bool degenerate;
  };
  std::vector<double> interior_weights;
  int last_observed = 0;
  // Per observed step: counts per volume class for the P(x/x) regression.
  std::vector<std::array<std::pair<std::size_t, std::size_t>, 3>> class_counts;

  for (int step = 1; step <= steps; ++step) {
    const int parent_s = kSecondsPerDay >> (step - 1);
    const int child_s = parent_s / 2;
    if (child_s * 2 != parent_s || child_s % res != 0) break;
    const std::size_t parent_boxes = static_cast<std::size_t>(parent_s / res);
    const std::size_t child_boxes = parent_boxes / 2;
    const std::size_t parents_per_day = static_cast<std::size_t>(1) << (step - 1);

    std::vector<double> wet_volumes;
    for (const auto* d : complete) {
      for (std::size_t j = 0; j < parents_per_day; ++j) {
        double v = 0.0;
        for (std::size_t k = 0; k < parent_boxes; ++k) v += d->boxes[j * parent_boxes + k];
        if (v > 0.0) wet_volumes.push_back(v);
      }
    }
    auto& entry = params.table[static_cast<std::size_t>(step - 1)];
    entry.observed = true;
    last_observed = step;
    if (wet_volumes.empty()) {
      class_counts.push_back({});
      continue;
    }
    std::sort(wet_volumes.begin(), wet_volumes.end());
    entry.volume_q33 = quantile_sorted(wet_volumes, 0.33);
    entry.volume_q67 = quantile_sorted(wet_volumes, 0.67);

    std::array<std::array<std::pair<std::size_t, std::size_t>, 3>, 4> counts{};  // (degenerate, total)
    for (const auto* d : complete) {
      std::vector<double> parents(parents_per_day, 0.0), lefts(parents_per_day, 0.0);
      for (std::size_t j = 0; j < parents_per_day; ++j) {
        double left = 0.0, right = 0.0;
        for (std::size_t k = 0; k < child_boxes; ++k) left += d->boxes[j * parent_boxes + k];
        for (std::size_t k = child_boxes; k < parent_boxes; ++k) right += d->boxes[j * parent_boxes + k];
        parents[j] = left + right;
        lefts[j] = left;
      }
      const bool day_before = detail::neighbor_day_wet(totals, d->ordinal - 1);
      const bool day_after = detail::neighbor_day_wet(totals, d->ordinal + 1);
      for (std::size_t j = 0; j < parents_per_day; ++j) {
        const double v = parents[j];
        if (!(v > 0.0)) continue;
        const bool prev = j == 0 ? day_before : parents[j - 1] > 0.0;
        const bool next = j + 1 == parents_per_day ? day_after : parents[j + 1] > 0.0;
        const Position pos = position_from_neighbors(prev, next);
        const int vc = params.volume_class(step, v);
        const double w = lefts[j] / v;
        const bool degenerate = lefts[j] == 0.0 || lefts[j] == v;
        auto& c = counts[static_cast<std::size_t>(pos)][static_cast<std::size_t>(vc - 1)];
        c.second += 1;
        if (degenerate) {
          c.first += 1;
        } else {
          interior_weights.push_back(w);
        }
      }
    }

    std::size_t deg_total = 0, all_total = 0;
    std::array<std::pair<std::size_t, std::size_t>, 3> by_class{};
    for (std::size_t p = 0; p < 4; ++p) {
      for (std::size_t v = 0; v < 3; ++v) {
        deg_total += counts[p][v].first;
        all_total += counts[p][v].second;
        by_class[v].first += counts[p][v].first;
        by_class[v].second += counts[p][v].second;
      }
    }
    class_counts.push_back(by_class);
    entry.samples = all_total;
    entry.pooled_p01 = all_total ? static_cast<double>(deg_total) / static_cast<double>(all_total) : 0.0;
    for (std::size_t p = 0; p < 4; ++p) {
      for (std::size_t v = 0; v < 3; ++v) {
        const auto [deg, tot] = counts[p][v];
        entry.cells[p][v] = tot ? CascadeCell{static_cast<double>(deg) / static_cast<double>(tot), tot}
                                : CascadeCell{entry.pooled_p01, 0};
      }
    }
  }
  if (last_observed == 0) {
    throw ContractError("input resolution of " + std::to_string(res) + " s cannot resolve the first cascade step");
  }
  if (interior_weights.empty() &&
      std::all_of(params.table.begin(), params.table.begin() + last_observed, [](const auto& s) { return s.samples == 0; })) {
    throw EstimationError("calibration series has no wet boxes");
  }

  // Scaling law on the steps with a positive pooled P01.
  std::vector<double> log_r, log_p;
  for (int step = 1; step <= last_observed; ++step) {
    const auto& s = params.table[static_cast<std::size_t>(step - 1)];
    if (s.samples > 0 && s.pooled_p01 > 0.0) {
      log_r.push_back(std::log(CascadeParams::parent_hours(step)));
      log_p.push_back(std::log(s.pooled_p01));
    }
  }
  if (log_r.size() >= 2) {
    const auto line = fit_line(log_r, log_p);
    params.scaling_c1 = std::exp(line.intercept);
    params.scaling_c2 = line.slope;
  } else if (log_r.size() == 1) {
    params.scaling_c1 = std::exp(log_p.front());
    params.scaling_c2 = 0.0;
  }

  for (int step = last_observed + 1; step <= steps; ++step) {
    auto& s = params.table[static_cast<std::size_t>(step - 1)];
    const auto& prev = params.table[static_cast<std::size_t>(step - 2)];
    s.observed = false;
    s.samples = 0;
    s.pooled_p01 = params.scaling_p01(CascadeParams::parent_hours(step));
    s.volume_q33 = 0.5 * prev.volume_q33;
    s.volume_q67 = 0.5 * prev.volume_q67;
    for (auto& row : s.cells) {
      for (auto& cell : row) cell = {s.pooled_p01, 0};
    }
  }

  // P(x/x) against volume class: mean slope and intercept over observed steps.
  std::vector<double> slopes, intercepts;
  double pxx_sum = 0.0;
  std::size_t pxx_n = 0;
  for (const auto& by_class : class_counts) {
    std::vector<double> vc, pxx;
    for (std::size_t v = 0; v < 3; ++v) {
      if (by_class[v].second == 0) continue;
      vc.push_back(static_cast<double>(v + 1));
      pxx.push_back(1.0 - static_cast<double>(by_class[v].first) / static_cast<double>(by_class[v].second));
      pxx_sum += pxx.back();
      ++pxx_n;
    }
    if (vc.size() >= 2) {
      const auto line = fit_line(vc, pxx);
      slopes.push_back(line.slope);
      intercepts.push_back(line.intercept);
    }
  }
  if (!slopes.empty()) {
    params.px_slope = mean(slopes);
    params.px_intercept = mean(intercepts);
  } else if (pxx_n > 0) {
    params.px_slope = 0.0;
    params.px_intercept = pxx_sum / static_cast<double>(pxx_n);
  }

  // Symmetric beta by moments: Var[W] = 1 / (4 (2a + 1)).
  if (interior_weights.size() < 2) {
    params.beta_shape = 1.0;
    params.warnings.push_back("fewer than two interior weights; beta shape set to 1 (uniform)");
  } else {
    const double var = variance(interior_weights);
    if (var <= 0.0) {
      params.beta_shape = options.beta_shape_cap;
    } else if (var >= 0.25) {
      params.beta_shape = options.beta_shape_floor;
      params.warnings.push_back("interior weight variance >= 1/4; beta shape floored");
    } else {
      params.beta_shape = std::clamp((1.0 / (4.0 * var) - 1.0) / 2.0, options.beta_shape_floor, options.beta_shape_cap);
    }
  }
  params.validate();
  return params;
}

struct BranchContext {
  int step = 1;
  Position position = Position::isolated;
  int volume_class = 1;
  double volume = 0.0;
};

/// Default weight source: degenerate split with probability P01, otherwise
/// symmetric beta.
class CascadeGenerator {
 public:
  explicit CascadeGenerator(const CascadeParams& params) : params_(params) {}

  double operator()(const BranchContext& ctx, Philox4x32& rng) const {
    const double p01 = params_.p01(ctx.step, ctx.position, ctx.volume_class);
    if (rng.uniform() < p01) return rng.uniform() < params_.half_split_prob ? 1.0 : 0.0;
    return beta_variate(rng, params_.beta_shape, params_.beta_shape);
  }

 private:
  const CascadeParams& params_;
};

/// Splits every daily box through `params.steps` halvings. Each day draws from
/// its own stream keyed by (seed, station, year, day), so days are independent.
/// `weights(ctx, rng)` returns the first-half weight in [0, 1].
template <class WeightSource>
DepthSeries disaggregate(const DepthSeries& daily, const CascadeParams& params, std::uint64_t seed,
                         WeightSource&& weights) {
  if (daily.resolution_s() != kSecondsPerDay) throw ContractError("disaggregate expects daily boxes");
  params.validate();
  const int out_res = params.output_resolution_s();
  std::map<long long, double> totals;
  for (const auto& r : daily.records()) {
    totals[day_ordinal(daily.calendar(), r.stamp.year, r.stamp.day_of_year)] = r.depth_mm;
  }
  std::vector<DepthRecord> out;
  out.reserve(daily.size() << params.steps);
  std::vector<double> level, next;
  for (const auto& r : daily.records()) {
    const long long ordinal = day_ordinal(daily.calendar(), r.stamp.year, r.stamp.day_of_year);
    const bool day_before = detail::neighbor_day_wet(totals, ordinal - 1);
    const bool day_after = detail::neighbor_day_wet(totals, ordinal + 1);
    Philox4x32 rng(derive_seed(seed, daily.station_id(), r.stamp.year, r.stamp.day_of_year));
    level.assign(1, r.depth_mm);
    for (int step = 1; step <= params.steps; ++step) {
      next.assign(level.size() * 2, 0.0);
      for (std::size_t j = 0; j < level.size(); ++j) {
        const double v = level[j];
        if (!(v > 0.0)) continue;
        const bool prev = j == 0 ? day_before : level[j - 1] > 0.0;
        const bool after = j + 1 == level.size() ? day_after : level[j + 1] > 0.0;
        const BranchContext ctx{step, position_from_neighbors(prev, after), params.volume_class(step, v), v};
        const double w = std::clamp(static_cast<double>(weights(ctx, rng)), 0.0, 1.0);
        const double left = w * v;
        next[2 * j] = left;
        next[2 * j + 1] = std::max(v - left, 0.0);
      }
      level.swap(next);
    }
    for (std::size_t k = 0; k < level.size(); ++k) {
      out.push_back({{r.stamp.year, r.stamp.day_of_year, static_cast<int>(k) * out_res}, level[k]});
    }
  }
  return DepthSeries(daily.station_id(), out_res, std::move(out), daily.calendar());
}

inline DepthSeries disaggregate(const DepthSeries& daily, const CascadeParams& params, std::uint64_t seed) {
  return disaggregate(daily, params, seed, CascadeGenerator(params));
}

/// Annual maxima at `target_s` from a disaggregated series. When the target is
/// not a dyadic multiple of the series resolution, maxima at the bracketing
/// resolutions are combined geometrically: x = x_lo^w * x_hi^(1-w),
/// w = log(r_hi / target) / log(r_hi / r_lo).
inline AnnualMaxSeries interpolate_resolution(const DepthSeries& fine, int target_s, std::string source_tag = "observed") {
  if (target_s % 3600 != 0 || !is_standard_duration(target_s / 3600)) {
    throw ContractError("interpolation target must be a standard duration (1, 2, 6, 12 or 24 h)");
  }
  const int res = fine.resolution_s();
  int r_lo = 0, r_hi = 0;
  for (int r = res; r <= kSecondsPerDay; r *= 2) {
    if (r == target_s) {
      auto m = window_maxima(fine, r);
      return AnnualMaxSeries(fine.station_id(), target_s / 3600, std::move(m.entries), std::move(source_tag),
                             std::move(m.gap_years));
    }
    if (r < target_s) r_lo = r;
    if (r > target_s && r_hi == 0) r_hi = r;
  }
  if (r_lo == 0 || r_hi == 0) throw ContractError("interpolation target is outside the dyadic resolution range");
  const double w = std::log(static_cast<double>(r_hi) / target_s) / std::log(static_cast<double>(r_hi) / r_lo);
  const auto lo = window_maxima(fine, r_lo);
  const auto hi = window_maxima(fine, r_hi);
  std::map<int, double> hi_by_year;
  for (const auto& e : hi.entries) hi_by_year[e.year] = e.intensity;
  std::vector<AnnualMax> entries;
  std::vector<int> gaps = lo.gap_years;
  gaps.insert(gaps.end(), hi.gap_years.begin(), hi.gap_years.end());
  for (const auto& e : lo.entries) {
    const auto it = hi_by_year.find(e.year);
    if (it == hi_by_year.end()) continue;
    entries.push_back({e.year, std::pow(e.intensity, w) * std::pow(it->second, 1.0 - w)});
  }
  return AnnualMaxSeries(fine.station_id(), target_s / 3600, std::move(entries), std::move(source_tag), std::move(gaps));
}

/// GEV quantile mapping of disaggregated maxima onto reference maxima.
inline AnnualMaxSeries adjust_disaggregated_extremes(const AnnualMaxSeries& disagg_am, const AnnualMaxSeries& reference_am) {
  if (disagg_am.empty() || reference_am.empty()) throw ContractError("adjustment needs non-empty series");
  return qm_historical(disagg_am, reference_am, QmMethod::gev);
}

// ---------------------------------------------------------------------------
// JSON

inline nlohmann::json to_json(const CascadeParams& p) {
  nlohmann::json steps = nlohmann::json::array();
  for (int k = 1; k <= p.steps; ++k) {
    const auto& s = p.at(k);
    nlohmann::json cells = nlohmann::json::object();
    for (Position pos : kPositions) {
      nlohmann::json row = nlohmann::json::array();
      for (const auto& cell : s.cells[static_cast<std::size_t>(pos)]) {
        row.push_back({{"p01", cell.p01}, {"samples", cell.samples}});
      }
      cells[to_string(pos)] = row;
    }
    steps.push_back({{"step", k},
                     {"parent_hours", CascadeParams::parent_hours(k)},
                     {"observed", s.observed},
                     {"pooled_p01", s.pooled_p01},
                     {"samples", s.samples},
                     {"volume_q33_mm", s.volume_q33},
                     {"volume_q67_mm", s.volume_q67},
                     {"p01_by_position_and_volume_class", cells}});
  }
  return {{"steps", p.steps},
          {"output_resolution_s", p.output_resolution_s()},
          {"p01_table", steps},
          {"p01_scaling", {{"c1", p.scaling_c1}, {"c2", p.scaling_c2}, {"resolution_unit", "hours"}}},
          {"px_regression", {{"a", p.px_intercept}, {"b_m", p.px_slope}}},
          {"beta_shape", p.beta_shape},
          {"half_split_prob", p.half_split_prob},
          {"warnings", p.warnings}};
}

inline CascadeParams cascade_params_from_json(const nlohmann::json& j) {
  CascadeParams p;
  p.steps = j.at("steps").get<int>();
  const auto& table = j.at("p01_table");
  if (!table.is_array() || table.size() != static_cast<std::size_t>(p.steps)) {
    throw ContractError("p01_table must list every cascade step");
  }
  for (const auto& s : table) {
    CascadeStep step;
    step.observed = s.value("observed", true);
    step.pooled_p01 = s.at("pooled_p01").get<double>();
    step.samples = s.value("samples", std::size_t{0});
    step.volume_q33 = s.at("volume_q33_mm").get<double>();
    step.volume_q67 = s.at("volume_q67_mm").get<double>();
    const auto& cells = s.at("p01_by_position_and_volume_class");
    for (Position pos : kPositions) {
      const auto& row = cells.at(to_string(pos));
      for (std::size_t v = 0; v < 3; ++v) {
        step.cells[static_cast<std::size_t>(pos)][v] = {row.at(v).at("p01").get<double>(),
                                                        row.at(v).value("samples", std::size_t{0})};
      }
    }
    p.table.push_back(step);
  }
  p.scaling_c1 = j.at("p01_scaling").at("c1").get<double>();
  p.scaling_c2 = j.at("p01_scaling").at("c2").get<double>();
  p.px_intercept = j.at("px_regression").at("a").get<double>();
  p.px_slope = j.at("px_regression").at("b_m").get<double>();
  p.beta_shape = j.at("beta_shape").get<double>();
  p.half_split_prob = j.value("half_split_prob", 0.5);
  p.warnings = j.value("warnings", std::vector<std::string>{});
  p.validate();
  return p;
}

/// Cascade with the same P01 in every cell and no volume dependence; used for
/// forward simulation studies.
inline CascadeParams uniform_cascade(int steps, double p01, double beta_shape, double half_split_prob = 0.5) {
  CascadeParams p;
  p.steps = steps;
  p.beta_shape = beta_shape;
  p.half_split_prob = half_split_prob;
  p.scaling_c1 = p01;
  p.px_intercept = 1.0 - p01;
  for (int k = 0; k < steps; ++k) {
    CascadeStep s;
    s.pooled_p01 = p01;
    s.observed = true;
    for (auto& row : s.cells) {
      for (auto& cell : row) cell = {p01, 0};
    }
    p.table.push_back(s);
  }
  p.validate();
  return p;
}

}  // namespace idf
