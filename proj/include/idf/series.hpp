#pragma once

// Rainfall depth series, annual-maximum series and multi-model ensembles.

#include <algorithm>
#include <array>
#include <compare>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "idf/csv.hpp"
#include "idf/error.hpp"
#include "idf/numeric.hpp"

namespace idf {

inline constexpr int kSecondsPerDay = 86400;
inline constexpr std::array<int, 5> kStandardDurations{1, 2, 6, 12, 24};
inline constexpr double kWetThresholdMm = 0.1;

enum class Calendar {
  gregorian,  // 365 or 366 days
  noleap,     // always 365 days
};

inline bool is_leap_year(int year) noexcept { return (year % 4 == 0 && year % 100 != 0) || year % 400 == 0; }

inline int days_in_year(Calendar calendar, int year) noexcept {
  return calendar == Calendar::gregorian && is_leap_year(year) ? 366 : 365;
}

/// Consecutive day number across years; only differences are meaningful.
inline long long day_ordinal(Calendar calendar, int year, int day_of_year) noexcept {
  long long days = 0;
  if (calendar == Calendar::noleap) return 365LL * year + day_of_year;
  const long long y = year - 1;
  days = 365LL * y + y / 4 - y / 100 + y / 400;
  return days + day_of_year;
}

inline bool is_standard_duration(int duration_h) noexcept {
  return std::find(kStandardDurations.begin(), kStandardDurations.end(), duration_h) != kStandardDurations.end();
}

struct SeriesStamp {
  int year = 0;
  int day_of_year = 1;
  int second_of_day = 0;

  int hour() const noexcept { return second_of_day / 3600; }
  auto operator<=>(const SeriesStamp&) const = default;
};

struct DepthRecord {
  SeriesStamp stamp;
  double depth_mm = 0.0;
};

/// Validated, time-ordered depth records at a fixed box length.
class DepthSeries {
 public:
  DepthSeries() = default;

  DepthSeries(std::string station_id, int resolution_s, std::vector<DepthRecord> records,
              Calendar calendar = Calendar::gregorian)
      : station_id_(std::move(station_id)), resolution_s_(resolution_s), calendar_(calendar), records_(std::move(records)) {
    if (resolution_s_ <= 0 || kSecondsPerDay % resolution_s_ != 0) {
      throw ContractError("resolution must divide one day, got " + std::to_string(resolution_s_) + " s");
    }
    for (std::size_t i = 0; i < records_.size(); ++i) {
      const auto& r = records_[i];
      if (!std::isfinite(r.depth_mm) || r.depth_mm < 0.0) {
        throw ValidationError("record " + std::to_string(i) + ": depth must be finite and non-negative");
      }
      if (r.stamp.day_of_year < 1 || r.stamp.day_of_year > days_in_year(calendar_, r.stamp.year)) {
        throw ValidationError("record " + std::to_string(i) + ": day_of_year out of range");
      }
      if (r.stamp.second_of_day < 0 || r.stamp.second_of_day >= kSecondsPerDay ||
          r.stamp.second_of_day % resolution_s_ != 0) {
        throw ValidationError("record " + std::to_string(i) + ": time of day not aligned to the resolution");
      }
      if (i > 0 && !(records_[i - 1].stamp < r.stamp)) {
        throw ValidationError("record " + std::to_string(i) + ": stamps must be strictly increasing");
      }
    }
  }

  const std::string& station_id() const noexcept { return station_id_; }
  int resolution_s() const noexcept { return resolution_s_; }
  Calendar calendar() const noexcept { return calendar_; }
  const std::vector<DepthRecord>& records() const noexcept { return records_; }
  std::size_t size() const noexcept { return records_.size(); }
  bool empty() const noexcept { return records_.empty(); }
  int boxes_per_day() const noexcept { return kSecondsPerDay / resolution_s_; }

  double total_depth() const noexcept {
    double total = 0.0;
    for (const auto& r : records_) total += r.depth_mm;
    return total;
  }

 private:
  std::string station_id_;
  int resolution_s_ = 3600;
  Calendar calendar_ = Calendar::gregorian;
  std::vector<DepthRecord> records_;
};

namespace detail {

inline int parse_second_of_day(const std::string& text, std::size_t line) {
  const double hours = csv::to_double(text, line);
  const double seconds = hours * 3600.0;
  const double rounded = std::round(seconds);
  if (std::abs(seconds - rounded) > 1e-6) throw ParseError("hour does not map to a whole second", line);
  return static_cast<int>(rounded);
}

inline std::string format_hour(int second_of_day) {
  if (second_of_day % 3600 == 0) return std::to_string(second_of_day / 3600);
  return csv::format(second_of_day / 3600.0);
}

}  // namespace detail

/// Reads `station_id,year,day_of_year,hour,depth_mm`. The hour column may be
/// fractional for sub-hourly boxes (0.75 is the box starting at 45 minutes).
inline DepthSeries read_depth_csv(std::istream& in, int resolution_s, Calendar calendar = Calendar::gregorian) {
  const auto table = csv::parse(in);
  const std::size_t c_station = table.column("station_id"), c_year = table.column("year"),
                    c_day = table.column("day_of_year"), c_hour = table.column("hour"),
                    c_depth = table.column("depth_mm");
  std::string station;
  std::vector<std::pair<DepthRecord, std::size_t>> rows;
  rows.reserve(table.rows.size());
  for (const auto& row : table.rows) {
    const auto& f = row.fields;
    if (station.empty()) {
      station = f[c_station];
    } else if (f[c_station] != station) {
      throw ValidationError("line " + std::to_string(row.line) + ": more than one station_id in file");
    }
    DepthRecord rec;
    rec.stamp.year = static_cast<int>(csv::to_int(f[c_year], row.line));
    rec.stamp.day_of_year = static_cast<int>(csv::to_int(f[c_day], row.line));
    rec.stamp.second_of_day = detail::parse_second_of_day(f[c_hour], row.line);
    rec.depth_mm = csv::to_double(f[c_depth], row.line);
    if (!std::isfinite(rec.depth_mm) || rec.depth_mm < 0.0) {
      throw ValidationError("line " + std::to_string(row.line) + ": depth_mm must be finite and non-negative");
    }
    if (rec.stamp.day_of_year < 1 || rec.stamp.day_of_year > days_in_year(calendar, rec.stamp.year)) {
      throw ValidationError("line " + std::to_string(row.line) + ": day_of_year out of range");
    }
    if (rec.stamp.second_of_day < 0 || rec.stamp.second_of_day >= kSecondsPerDay ||
        rec.stamp.second_of_day % resolution_s != 0) {
      throw ValidationError("line " + std::to_string(row.line) + ": hour not aligned to the resolution");
    }
    rows.emplace_back(rec, row.line);
  }
  std::stable_sort(rows.begin(), rows.end(),
                   [](const auto& a, const auto& b) { return a.first.stamp < b.first.stamp; });
  std::vector<DepthRecord> records;
  records.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (i > 0 && rows[i].first.stamp == rows[i - 1].first.stamp) {
      throw ValidationError("line " + std::to_string(rows[i].second) + ": duplicate stamp");
    }
    records.push_back(rows[i].first);
  }
  return DepthSeries(station, resolution_s, std::move(records), calendar);
}

inline DepthSeries load_depth_csv(const std::string& path, int resolution_s, Calendar calendar = Calendar::gregorian) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  return read_depth_csv(in, resolution_s, calendar);
}

inline void write_depth_csv(std::ostream& out, const DepthSeries& s) {
  csv::Writer w(out);
  w.row("station_id", "year", "day_of_year", "hour", "depth_mm");
  for (const auto& r : s.records()) {
    w.row(s.station_id(), r.stamp.year, r.stamp.day_of_year, detail::format_hour(r.stamp.second_of_day), r.depth_mm);
  }
}

inline void save_depth_csv(const std::string& path, const DepthSeries& s) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  write_depth_csv(out, s);
}

/// Depths strictly below `threshold_mm` become 0.
inline DepthSeries apply_wet_threshold(const DepthSeries& s, double threshold_mm) {
  if (!(threshold_mm >= 0.0)) throw ContractError("wet threshold must be non-negative");
  auto records = s.records();
  for (auto& r : records) {
    if (r.depth_mm < threshold_mm) r.depth_mm = 0.0;
  }
  return DepthSeries(s.station_id(), s.resolution_s(), std::move(records), s.calendar());
}

/// Sums boxes into coarser boxes of `target_s` seconds. A coarse box is
/// emitted when at least one of its fine boxes is present.
inline DepthSeries aggregate(const DepthSeries& s, int target_s) {
  if (target_s % s.resolution_s() != 0 || kSecondsPerDay % target_s != 0) {
    throw ContractError("aggregation target must be a multiple of the resolution dividing one day");
  }
  std::vector<DepthRecord> out;
  for (const auto& r : s.records()) {
    SeriesStamp stamp = r.stamp;
    stamp.second_of_day -= stamp.second_of_day % target_s;
    if (!out.empty() && out.back().stamp == stamp) {
      out.back().depth_mm += r.depth_mm;
    } else {
      out.push_back({stamp, r.depth_mm});
    }
  }
  return DepthSeries(s.station_id(), target_s, std::move(out), s.calendar());
}

// ---------------------------------------------------------------------------
// Annual maxima

struct AnnualMax {
  int year = 0;
  double intensity = 0.0;  // mm/h
};

inline bool is_valid_source_tag(const std::string& tag) {
  if (tag == "observed" || tag == "mm-min" || tag == "mm-med" || tag == "mm-max") return true;
  return tag.size() > 6 && tag.compare(0, 6, "model:") == 0;
}

/// Yearly maxima intensities for one station and duration. Years without a
/// usable maximum are listed in `gap_years` rather than stored as entries.
class AnnualMaxSeries {
 public:
  AnnualMaxSeries() = default;

  AnnualMaxSeries(std::string station_id, int duration_h, std::vector<AnnualMax> entries,
                  std::string source_tag = "observed", std::vector<int> gap_years = {})
      : station_id_(std::move(station_id)),
        duration_h_(duration_h),
        source_tag_(std::move(source_tag)),
        entries_(std::move(entries)),
        gap_years_(std::move(gap_years)) {
    if (!is_standard_duration(duration_h_)) {
      throw ContractError("duration must be one of 1, 2, 6, 12, 24 h; got " + std::to_string(duration_h_));
    }
    if (!is_valid_source_tag(source_tag_)) throw ContractError("invalid source tag '" + source_tag_ + "'");
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      if (!std::isfinite(entries_[i].intensity) || entries_[i].intensity <= 0.0) {
        throw ValidationError("year " + std::to_string(entries_[i].year) + ": intensity must be positive and finite");
      }
      if (i > 0 && entries_[i].year <= entries_[i - 1].year) {
        throw ValidationError("annual maxima years must be strictly increasing");
      }
    }
    std::sort(gap_years_.begin(), gap_years_.end());
    gap_years_.erase(std::unique(gap_years_.begin(), gap_years_.end()), gap_years_.end());
    for (int gap : gap_years_) {
      if (std::any_of(entries_.begin(), entries_.end(), [gap](const AnnualMax& e) { return e.year == gap; })) {
        throw ValidationError("year " + std::to_string(gap) + " is both a gap and an entry");
      }
    }
  }

  const std::string& station_id() const noexcept { return station_id_; }
  int duration_h() const noexcept { return duration_h_; }
  const std::string& source_tag() const noexcept { return source_tag_; }
  const std::vector<AnnualMax>& entries() const noexcept { return entries_; }
  const std::vector<int>& gap_years() const noexcept { return gap_years_; }
  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }

  std::vector<int> years() const {
    std::vector<int> out;
    out.reserve(entries_.size());
    for (const auto& e : entries_) out.push_back(e.year);
    return out;
  }
  std::vector<double> values() const {
    std::vector<double> out;
    out.reserve(entries_.size());
    for (const auto& e : entries_) out.push_back(e.intensity);
    return out;
  }

  /// Same station/duration/years with new intensities (one per entry).
  AnnualMaxSeries with_values(std::span<const double> values, std::optional<std::string> tag = std::nullopt) const {
    if (values.size() != entries_.size()) throw ContractError("value count does not match entry count");
    auto entries = entries_;
    for (std::size_t i = 0; i < entries.size(); ++i) entries[i].intensity = values[i];
    return AnnualMaxSeries(station_id_, duration_h_, std::move(entries), tag.value_or(source_tag_), gap_years_);
  }

  AnnualMaxSeries with_tag(std::string tag) const {
    return AnnualMaxSeries(station_id_, duration_h_, entries_, std::move(tag), gap_years_);
  }

  /// Entries with first <= year <= last; gaps in range carried over.
  AnnualMaxSeries window(int first, int last) const {
    std::vector<AnnualMax> entries;
    std::vector<int> gaps;
    for (const auto& e : entries_) {
      if (e.year >= first && e.year <= last) entries.push_back(e);
    }
    for (int g : gap_years_) {
      if (g >= first && g <= last) gaps.push_back(g);
    }
    return AnnualMaxSeries(station_id_, duration_h_, std::move(entries), source_tag_, std::move(gaps));
  }

 private:
  std::string station_id_;
  int duration_h_ = 1;
  std::string source_tag_ = "observed";
  std::vector<AnnualMax> entries_;
  std::vector<int> gap_years_;
};

/// Maxima of a rolling window, before wrapping into an AnnualMaxSeries.
struct WindowMaxima {
  std::vector<AnnualMax> entries;  // intensity in mm/h
  std::vector<int> gap_years;
};

inline constexpr double kMaxMissingFraction = 0.2;

/// Per calendar year, the largest depth over any run of `window_s` seconds of
/// consecutive boxes, divided by the window length in hours. Windows stay
/// inside the year. Missing boxes count as dry; a year with more than 20%
/// missing boxes, or with no rain at all, is a gap.
inline WindowMaxima window_maxima(const DepthSeries& s, int window_s) {
  if (window_s <= 0 || window_s % s.resolution_s() != 0) {
    throw ContractError("window of " + std::to_string(window_s) + " s is not a multiple of the " +
                        std::to_string(s.resolution_s()) + " s resolution");
  }
  WindowMaxima out;
  if (s.empty()) return out;
  const int per_day = s.boxes_per_day();
  const auto width = static_cast<std::size_t>(window_s / s.resolution_s());
  const double hours = window_s / 3600.0;
  const auto& recs = s.records();
  const int first_year = recs.front().stamp.year, last_year = recs.back().stamp.year;

  std::size_t cursor = 0;
  std::vector<double> boxes;
  for (int year = first_year; year <= last_year; ++year) {
    const int days = days_in_year(s.calendar(), year);
    boxes.assign(static_cast<std::size_t>(days) * per_day, 0.0);
    std::size_t present = 0;
    while (cursor < recs.size() && recs[cursor].stamp.year == year) {
      const auto& st = recs[cursor].stamp;
      boxes[static_cast<std::size_t>(st.day_of_year - 1) * per_day + st.second_of_day / s.resolution_s()] =
          recs[cursor].depth_mm;
      ++present;
      ++cursor;
    }
    const double missing = static_cast<double>(boxes.size() - present) / static_cast<double>(boxes.size());
    if (missing > kMaxMissingFraction || width > boxes.size()) {
      out.gap_years.push_back(year);
      continue;
    }
    double best = 0.0;
    for (std::size_t start = 0; start + width <= boxes.size(); ++start) {
      double sum = 0.0;
      for (std::size_t k = 0; k < width; ++k) sum += boxes[start + k];
      best = std::max(best, sum);
    }
    if (best > 0.0) {
      out.entries.push_back({year, best / hours});
    } else {
      out.gap_years.push_back(year);
    }
  }
  return out;
}

inline AnnualMaxSeries extract_annual_max(const DepthSeries& s, int duration_h, std::string source_tag = "observed") {
  if (!is_standard_duration(duration_h)) throw ContractError("duration must be one of 1, 2, 6, 12, 24 h");
  auto maxima = window_maxima(s, duration_h * 3600);
  return AnnualMaxSeries(s.station_id(), duration_h, std::move(maxima.entries), std::move(source_tag),
                         std::move(maxima.gap_years));
}

// CSV: station_id,duration_h,year,intensity_mm_per_h,source_tag. Gap years are
// rows with an empty intensity field.

inline std::vector<AnnualMaxSeries> read_annual_max_csv(std::istream& in) {
  const auto table = csv::parse(in);
  const std::size_t c_station = table.column("station_id"), c_dur = table.column("duration_h"),
                    c_year = table.column("year"), c_int = table.column("intensity_mm_per_h"),
                    c_tag = table.column("source_tag");
  struct Acc {
    std::vector<AnnualMax> entries;
    std::vector<int> gaps;
  };
  std::map<std::tuple<std::string, int, std::string>, Acc> groups;
  for (const auto& row : table.rows) {
    const auto& f = row.fields;
    const auto duration = static_cast<int>(csv::to_int(f[c_dur], row.line));
    if (!is_standard_duration(duration)) throw ValidationError("line " + std::to_string(row.line) + ": bad duration_h");
    if (!is_valid_source_tag(f[c_tag])) throw ValidationError("line " + std::to_string(row.line) + ": bad source_tag");
    auto& acc = groups[{f[c_station], duration, f[c_tag]}];
    const auto year = static_cast<int>(csv::to_int(f[c_year], row.line));
    if (f[c_int].empty()) {
      acc.gaps.push_back(year);
      continue;
    }
    const double v = csv::to_double(f[c_int], row.line);
    if (!std::isfinite(v) || v <= 0.0) {
      throw ValidationError("line " + std::to_string(row.line) + ": intensity must be positive and finite");
    }
    acc.entries.push_back({year, v});
  }
  std::vector<AnnualMaxSeries> out;
  for (auto& [key, acc] : groups) {
    std::sort(acc.entries.begin(), acc.entries.end(), [](const auto& a, const auto& b) { return a.year < b.year; });
    for (std::size_t i = 1; i < acc.entries.size(); ++i) {
      if (acc.entries[i].year == acc.entries[i - 1].year) {
        throw ValidationError("duplicate year " + std::to_string(acc.entries[i].year) + " for station " +
                              std::get<0>(key));
      }
    }
    out.emplace_back(std::get<0>(key), std::get<1>(key), std::move(acc.entries), std::get<2>(key), std::move(acc.gaps));
  }
  return out;
}

inline std::vector<AnnualMaxSeries> load_annual_max_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  return read_annual_max_csv(in);
}

inline void write_annual_max_header(std::ostream& out) {
  csv::Writer(out).row("station_id", "duration_h", "year", "intensity_mm_per_h", "source_tag");
}

inline void write_annual_max_rows(std::ostream& out, const AnnualMaxSeries& s) {
  csv::Writer w(out);
  std::size_t g = 0;
  const auto& gaps = s.gap_years();
  for (const auto& e : s.entries()) {
    for (; g < gaps.size() && gaps[g] < e.year; ++g) w.row(s.station_id(), s.duration_h(), gaps[g], "", s.source_tag());
    w.row(s.station_id(), s.duration_h(), e.year, e.intensity, s.source_tag());
  }
  for (; g < gaps.size(); ++g) w.row(s.station_id(), s.duration_h(), gaps[g], "", s.source_tag());
}

inline void save_annual_max_csv(const std::string& path, std::span<const AnnualMaxSeries> series) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  write_annual_max_header(out);
  for (const auto& s : series) write_annual_max_rows(out, s);
}

// ---------------------------------------------------------------------------
// Ensembles

/// One or more annual-maximum series on an identical station, duration and year set.
class EnsembleSet {
 public:
  explicit EnsembleSet(std::vector<AnnualMaxSeries> members) : members_(std::move(members)) {
    if (members_.empty()) throw ContractError("ensemble needs at least one member");
    const auto& first = members_.front();
    const auto years = first.years();
    for (const auto& m : members_) {
      if (m.station_id() != first.station_id() || m.duration_h() != first.duration_h()) {
        throw ContractError("ensemble members must share station and duration");
      }
      if (m.years() != years) throw ContractError("ensemble members must share the same years");
    }
  }

  const std::vector<AnnualMaxSeries>& members() const noexcept { return members_; }
  std::size_t size() const noexcept { return members_.size(); }

 private:
  std::vector<AnnualMaxSeries> members_;
};

/// Restricts every series to the years present in all of them.
inline std::vector<AnnualMaxSeries> align_on_common_years(std::span<const AnnualMaxSeries> series) {
  if (series.empty()) return {};
  std::set<int> common;
  for (const auto& e : series.front().entries()) common.insert(e.year);
  for (const auto& s : series.subspan(1)) {
    std::set<int> here;
    for (const auto& e : s.entries()) {
      if (common.count(e.year)) here.insert(e.year);
    }
    common = std::move(here);
  }
  std::vector<AnnualMaxSeries> out;
  for (const auto& s : series) {
    std::vector<AnnualMax> kept;
    std::vector<int> gaps = s.gap_years();
    for (const auto& e : s.entries()) {
      if (common.count(e.year)) {
        kept.push_back(e);
      } else {
        gaps.push_back(e.year);
      }
    }
    out.emplace_back(s.station_id(), s.duration_h(), std::move(kept), s.source_tag(), std::move(gaps));
  }
  return out;
}

struct EnsembleStats {
  AnnualMaxSeries mm_min;
  AnnualMaxSeries mm_med;
  AnnualMaxSeries mm_max;
};

/// Pointwise minimum, median and maximum over members for each year.
inline EnsembleStats ensemble_stats(const EnsembleSet& e) {
  const auto& first = e.members().front();
  const std::size_t n_years = first.size();
  std::vector<double> lo(n_years), mid(n_years), hi(n_years), column(e.size());
  for (std::size_t y = 0; y < n_years; ++y) {
    for (std::size_t m = 0; m < e.size(); ++m) column[m] = e.members()[m].entries()[y].intensity;
    lo[y] = *std::min_element(column.begin(), column.end());
    hi[y] = *std::max_element(column.begin(), column.end());
    mid[y] = median(column);
  }
  return {first.with_values(lo, "mm-min"), first.with_values(mid, "mm-med"), first.with_values(hi, "mm-max")};
}

}  // namespace idf
