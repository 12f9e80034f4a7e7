#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <vector>

#include "idf/cascade.hpp"
#include "idf/random.hpp"

namespace {

using idf::CascadeParams;
using idf::DepthRecord;
using idf::DepthSeries;
using idf::Position;

// Daily totals over whole years: wet with probability 0.4, exponential depth.
DepthSeries daily_series(int first_year, int years, std::uint64_t seed, double wet_prob = 0.4) {
  idf::Philox4x32 rng(seed);
  std::vector<DepthRecord> recs;
  for (int y = first_year; y < first_year + years; ++y) {
    const int days = idf::days_in_year(idf::Calendar::gregorian, y);
    for (int d = 1; d <= days; ++d) {
      const double depth = rng.uniform() < wet_prob ? 0.2 + idf::exponential_variate(rng, 8.0) : 0.0;
      recs.push_back({{y, d, 0}, depth});
    }
  }
  return DepthSeries("STA", idf::kSecondsPerDay, std::move(recs));
}

DepthSeries daily_days(int count, std::uint64_t seed) {
  idf::Philox4x32 rng(seed);
  std::vector<DepthRecord> recs;
  int y = 1980, d = 1;
  for (int i = 0; i < count; ++i) {
    const double depth = rng.uniform() < 0.4 ? 0.1 + idf::exponential_variate(rng, 8.0) : 0.0;
    recs.push_back({{y, d, 0}, depth});
    if (++d > idf::days_in_year(idf::Calendar::gregorian, y)) {
      d = 1;
      ++y;
    }
  }
  return DepthSeries("STA", idf::kSecondsPerDay, std::move(recs));
}

std::map<std::pair<int, int>, double> day_sums(const DepthSeries& s) {
  std::map<std::pair<int, int>, double> out;
  for (const auto& r : s.records()) out[{r.stamp.year, r.stamp.day_of_year}] += r.depth_mm;
  return out;
}

TEST(ClassifyPosition, NeighborRule) {
  const std::vector<double> v{0, 5, 3, 0};
  EXPECT_EQ(idf::classify_position(v, 1), Position::starting);
  EXPECT_EQ(idf::classify_position(v, 2), Position::ending);
  const std::vector<double> iso{0, 2, 0};
  EXPECT_EQ(idf::classify_position(iso, 1), Position::isolated);
  const std::vector<double> run{1, 2, 3};
  EXPECT_EQ(idf::classify_position(run, 1), Position::enclosed);
  EXPECT_EQ(idf::classify_position(run, 0), Position::starting);  // edge counts as dry
  EXPECT_EQ(idf::classify_position(run, 2), Position::ending);
  EXPECT_THROW(idf::classify_position(v, 0), idf::ContractError);
  EXPECT_THROW(idf::classify_position(v, 9), idf::ContractError);
}

TEST(Disaggregate, EvenSplitStub) {
  const DepthSeries day("S", idf::kSecondsPerDay, {{{2000, 10, 0}, 24.0}});
  const auto out = idf::disaggregate(day, idf::uniform_cascade(5, 0.3, 1.0), 1,
                                     [](const idf::BranchContext&, idf::Philox4x32&) { return 0.5; });
  EXPECT_EQ(out.resolution_s(), 2700);
  ASSERT_EQ(out.size(), 32u);
  for (std::size_t k = 0; k < out.size(); ++k) {
    EXPECT_EQ(out.records()[k].depth_mm, 0.75);
    EXPECT_EQ(out.records()[k].stamp.second_of_day, static_cast<int>(k) * 2700);
  }
}

TEST(Disaggregate, AllMassToFirstBox) {
  const DepthSeries day("S", idf::kSecondsPerDay, {{{2000, 10, 0}, 17.3}});
  const auto out = idf::disaggregate(day, idf::uniform_cascade(5, 1.0, 1.0, 1.0), 99);
  EXPECT_EQ(out.records()[0].depth_mm, 17.3);
  for (std::size_t k = 1; k < out.size(); ++k) EXPECT_EQ(out.records()[k].depth_mm, 0.0);
}

TEST(Disaggregate, ConservesDailyMass) {
  const auto daily = daily_days(10000, 3);
  const auto params = idf::uniform_cascade(5, 0.3, 0.5);
  for (std::uint64_t seed : {1ull, 2ull, 77ull}) {
    const auto sums = day_sums(idf::disaggregate(daily, params, seed));
    for (const auto& r : daily.records()) {
      const double got = sums.at({r.stamp.year, r.stamp.day_of_year});
      ASSERT_LE(std::abs(got - r.depth_mm), 1e-9 * std::max(r.depth_mm, 1e-300)) << r.stamp.year;
    }
  }
}

TEST(Disaggregate, DryParentsStayDryAndIntermittencyGrows) {
  const auto daily = daily_days(2000, 4);
  const auto fine = idf::disaggregate(daily, idf::uniform_cascade(5, 0.4, 0.5), 5);
  for (const auto& [day, total] : day_sums(fine)) {
    (void)day;
    ASSERT_GE(total, 0.0);
  }
  std::map<std::pair<int, int>, double> daily_depth;
  for (const auto& r : daily.records()) daily_depth[{r.stamp.year, r.stamp.day_of_year}] = r.depth_mm;
  for (const auto& r : fine.records()) {
    if (daily_depth.at({r.stamp.year, r.stamp.day_of_year}) == 0.0) {
      ASSERT_EQ(r.depth_mm, 0.0);
    }
  }
  double prev = -1.0;
  for (int res : {86400, 43200, 21600, 10800, 5400, 2700}) {
    const auto s = res == 2700 ? fine : idf::aggregate(fine, res);
    std::size_t dry = 0;
    for (const auto& r : s.records()) dry += r.depth_mm == 0.0;
    const double frac = static_cast<double>(dry) / static_cast<double>(s.size());
    EXPECT_GE(frac, prev);
    prev = frac;
  }
}

TEST(Disaggregate, DeterministicPerSeed) {
  const auto daily = daily_days(400, 5);
  const auto params = idf::uniform_cascade(5, 0.3, 0.7);
  const auto a = idf::disaggregate(daily, params, 11);
  const auto b = idf::disaggregate(daily, params, 11);
  const auto c = idf::disaggregate(daily, params, 12);
  ASSERT_EQ(a.size(), b.size());
  bool differs = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ASSERT_EQ(a.records()[i].depth_mm, b.records()[i].depth_mm);
    differs = differs || a.records()[i].depth_mm != c.records()[i].depth_mm;
  }
  EXPECT_TRUE(differs);
}

TEST(Disaggregate, DayStreamsDoNotDependOnOtherDays) {
  const auto daily = daily_days(200, 6);
  auto recs = daily.records();
  recs[100].depth_mm = recs[100].depth_mm > 0 ? recs[100].depth_mm * 3 : 0.0;
  const DepthSeries changed("STA", idf::kSecondsPerDay, recs);
  const auto params = idf::uniform_cascade(5, 0.3, 0.7);
  const auto a = idf::disaggregate(daily, params, 8);
  const auto b = idf::disaggregate(changed, params, 8);
  // Days 0..98 are more than one day away from the edit.
  for (std::size_t i = 0; i < 99 * 32; ++i) ASSERT_EQ(a.records()[i].depth_mm, b.records()[i].depth_mm);
}

TEST(Disaggregate, RejectsNonDailyInput) {
  const DepthSeries hourly("S", 3600, {{{2000, 1, 0}, 1.0}});
  EXPECT_THROW(idf::disaggregate(hourly, idf::uniform_cascade(5, 0.3, 1.0), 1), idf::ContractError);
}

TEST(Calibrate, RecoversForwardCascadeParameters) {
  const auto daily = daily_series(1970, 35, 7);
  ASSERT_GE(daily.size(), 10000u);
  const auto fine = idf::disaggregate(daily, idf::uniform_cascade(5, 0.3, 0.5), 8);
  const auto p = idf::calibrate(fine, 5);
  for (int step = 1; step <= 5; ++step) {
    EXPECT_TRUE(p.at(step).observed);
    EXPECT_NEAR(p.at(step).pooled_p01, 0.3, 0.03) << "step " << step;
  }
  EXPECT_NEAR(p.beta_shape, 0.5, 0.15);
  EXPECT_NEAR(p.beta_shape, 0.5, 0.3 * 0.5);
  EXPECT_TRUE(p.warnings.empty());
}

TEST(Calibrate, UniformInteriorWeightsGiveShapeNearOne) {
  const auto daily = daily_series(1970, 35, 9);
  const auto fine = idf::disaggregate(daily, idf::uniform_cascade(5, 0.3, 1.0), 10);
  const auto p = idf::calibrate(fine, 5);
  EXPECT_NEAR(p.beta_shape, 1.0, 0.3);
}

TEST(Calibrate, EvenSplitsGiveZeroP01AndLargeShape) {
  const auto daily = daily_series(1970, 35, 11);
  const auto fine = idf::disaggregate(daily, idf::uniform_cascade(5, 0.0, 1.0), 1,
                                      [](const idf::BranchContext&, idf::Philox4x32&) { return 0.5; });
  const auto p = idf::calibrate(fine, 5);
  for (int step = 1; step <= 5; ++step) {
    EXPECT_EQ(p.at(step).pooled_p01, 0.0);
    for (auto pos : idf::kPositions) {
      for (int v = 1; v <= 3; ++v) EXPECT_EQ(p.p01(step, pos, v), 0.0);
    }
  }
  EXPECT_GE(p.beta_shape, 1e5);
  EXPECT_TRUE(p.warnings.empty());
}

TEST(Calibrate, AllLeftSplitsGiveUnitP01) {
  const auto daily = daily_series(1970, 35, 12);
  const auto fine = idf::disaggregate(daily, idf::uniform_cascade(5, 1.0, 1.0, 1.0), 1);
  const auto p = idf::calibrate(fine, 5);
  EXPECT_EQ(p.at(1).pooled_p01, 1.0);
  EXPECT_FALSE(p.warnings.empty());  // no interior weights to fit a shape
}

TEST(Calibrate, HourlyInputFillsUnobservedStepsFromScalingLaw) {
  const auto daily = daily_series(1970, 35, 13);
  const auto fine = idf::disaggregate(daily, idf::uniform_cascade(5, 0.3, 0.5), 14);
  // 3 hour boxes observe steps 1..3 only (24 -> 12 -> 6 -> 3 h).
  const auto p = idf::calibrate(idf::aggregate(fine, 10800), 5);
  EXPECT_TRUE(p.at(3).observed);
  EXPECT_FALSE(p.at(4).observed);
  EXPECT_NEAR(p.at(4).pooled_p01, p.scaling_p01(idf::CascadeParams::parent_hours(4)), 1e-12);
  EXPECT_EQ(p.at(5).volume_q33, 0.5 * p.at(4).volume_q33);
}

TEST(Calibrate, NeedsEnoughYears) {
  const auto daily = daily_series(1970, 10, 15);
  const auto fine = idf::disaggregate(daily, idf::uniform_cascade(5, 0.3, 0.5), 1);
  EXPECT_THROW(idf::calibrate(fine, 5), idf::ContractError);
  idf::CalibrationOptions relaxed;
  relaxed.min_years = 10;
  EXPECT_NO_THROW(idf::calibrate(fine, 5, relaxed));
}

TEST(Calibrate, EmptyCellsInheritPooledEstimate) {
  const auto daily = daily_series(1970, 35, 16, 0.05);  // isolated wet days dominate
  const auto fine = idf::disaggregate(daily, idf::uniform_cascade(5, 0.3, 0.5), 17);
  const auto p = idf::calibrate(fine, 5);
  for (int step = 1; step <= 5; ++step) {
    for (const auto& row : p.at(step).cells) {
      for (const auto& cell : row) {
        if (cell.samples == 0) {
          EXPECT_EQ(cell.p01, p.at(step).pooled_p01);
        }
      }
    }
  }
}

DepthSeries constant_intensity(double mm_per_h) {
  std::vector<DepthRecord> recs;
  for (int y = 2000; y < 2003; ++y) {
    for (int d = 1; d <= idf::days_in_year(idf::Calendar::gregorian, y); ++d) {
      for (int k = 0; k < 32; ++k) recs.push_back({{y, d, k * 2700}, mm_per_h * 0.75});
    }
  }
  return DepthSeries("S", 2700, std::move(recs));
}

TEST(InterpolateResolution, GeometricWeight) {
  EXPECT_NEAR(std::log(5400.0 / 3600.0) / std::log(2.0), 0.5849625007211562, 1e-15);
  const auto daily = daily_series(1990, 3, 18);
  const auto fine = idf::disaggregate(daily, idf::uniform_cascade(5, 0.3, 0.5), 19);
  const auto at = idf::interpolate_resolution(fine, 3600);
  const auto lo = idf::window_maxima(fine, 2700);
  const auto hi = idf::window_maxima(fine, 5400);
  const double w = 0.5849625007211562;
  ASSERT_EQ(at.size(), lo.entries.size());
  for (std::size_t i = 0; i < at.size(); ++i) {
    const double expected = std::pow(lo.entries[i].intensity, w) * std::pow(hi.entries[i].intensity, 1.0 - w);
    EXPECT_NEAR(at.values()[i], expected, 1e-12 * expected);
    EXPECT_LE(at.values()[i], lo.entries[i].intensity);
    EXPECT_GE(at.values()[i], hi.entries[i].intensity);
  }
  EXPECT_EQ(at.duration_h(), 1);
}

TEST(InterpolateResolution, DyadicTargetIsIdentityAndFlatIsFixed) {
  const auto daily = daily_series(1990, 3, 20);
  const auto fine = idf::disaggregate(daily, idf::uniform_cascade(5, 0.3, 0.5), 21);
  const auto six = idf::interpolate_resolution(fine, 21600);
  const auto direct = idf::window_maxima(fine, 21600);
  ASSERT_EQ(six.size(), direct.entries.size());
  for (std::size_t i = 0; i < six.size(); ++i) EXPECT_EQ(six.values()[i], direct.entries[i].intensity);

  const auto flat = idf::interpolate_resolution(constant_intensity(10.0), 3600);
  ASSERT_EQ(flat.size(), 3u);
  for (double v : flat.values()) EXPECT_NEAR(v, 10.0, 1e-12);
  EXPECT_NEAR(idf::interpolate_resolution(constant_intensity(10.0), 7200).values()[0], 10.0, 1e-12);
}

TEST(InterpolateResolution, RejectsOutOfRangeTargets) {
  const auto hourly = idf::aggregate(constant_intensity(4.0), 10800);
  EXPECT_THROW(idf::interpolate_resolution(hourly, 3600), idf::ContractError);
  EXPECT_THROW(idf::interpolate_resolution(constant_intensity(4.0), 1000), idf::ContractError);
}

idf::AnnualMaxSeries am(const std::vector<double>& v, const std::string& tag) {
  std::vector<idf::AnnualMax> e;
  for (std::size_t i = 0; i < v.size(); ++i) e.push_back({1900 + static_cast<int>(i), v[i]});
  return idf::AnnualMaxSeries("S", 1, e, tag);
}

TEST(AdjustExtremes, IdentityOnReference) {
  idf::Philox4x32 rng(22);
  std::vector<double> ref(41);
  for (auto& v : ref) v = idf::gev_quantile(rng.uniform(), {21.38, 0, 7.59, -0.1});
  const auto out = idf::adjust_disaggregated_extremes(am(ref, "observed"), am(ref, "observed")).values();
  const auto fit = idf::lmoment_fit(ref);
  for (std::size_t i = 0; i < ref.size(); ++i) {
    const double p = idf::gev_cdf(ref[i], fit);
    if (p > 1.0 / 82.0 && p < 1.0 - 1.0 / 82.0) {
      EXPECT_NEAR(out[i], ref[i], 0.01 * ref[i]);
    }
  }
}

TEST(AdjustExtremes, RemovesConstantOffset) {
  idf::Philox4x32 rng(23);
  std::vector<double> ref(2000);
  for (auto& v : ref) v = idf::gev_quantile(rng.uniform(), {21.38, 0, 7.59, -0.1});
  auto shifted = ref;
  for (auto& v : shifted) v += 5.0;
  const auto out = idf::adjust_disaggregated_extremes(am(shifted, "observed"), am(ref, "observed")).values();
  std::vector<double> sorted = ref;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < ref.size(); ++i) {
    if (ref[i] < sorted[20] || ref[i] > sorted[sorted.size() - 21]) continue;
    EXPECT_NEAR(out[i], ref[i], 0.02 * ref[i]);
  }
}

TEST(AdjustExtremes, EmptyReferenceIsContractError) {
  const auto some = am(std::vector<double>(20, 1.0), "observed");
  const idf::AnnualMaxSeries none("S", 1, {});
  EXPECT_THROW(idf::adjust_disaggregated_extremes(some, none), idf::ContractError);
}

TEST(CascadeJson, RoundTrip) {
  const auto daily = daily_series(1970, 35, 24);
  const auto fine = idf::disaggregate(daily, idf::uniform_cascade(5, 0.3, 0.5), 25);
  const auto p = idf::calibrate(idf::aggregate(fine, 5400), 5);
  const auto q = idf::cascade_params_from_json(idf::to_json(p));
  EXPECT_EQ(q.steps, p.steps);
  EXPECT_EQ(q.beta_shape, p.beta_shape);
  EXPECT_EQ(q.scaling_c1, p.scaling_c1);
  EXPECT_EQ(q.scaling_c2, p.scaling_c2);
  EXPECT_EQ(q.px_intercept, p.px_intercept);
  EXPECT_EQ(q.px_slope, p.px_slope);
  for (int step = 1; step <= 5; ++step) {
    EXPECT_EQ(q.at(step).observed, p.at(step).observed);
    EXPECT_EQ(q.at(step).volume_q33, p.at(step).volume_q33);
    for (auto pos : idf::kPositions) {
      for (int v = 1; v <= 3; ++v) EXPECT_EQ(q.p01(step, pos, v), p.p01(step, pos, v));
    }
  }
  EXPECT_EQ(idf::to_json(q).dump(), idf::to_json(p).dump());
}

TEST(CascadeParams, ValidationAndRegressionClamp) {
  auto p = idf::uniform_cascade(5, 0.3, 0.5);
  EXPECT_EQ(p.output_resolution_s(), 2700);
  p.px_intercept = 0.9;
  p.px_slope = 0.2;
  EXPECT_EQ(p.px_regression(3), 1.0);
  p.beta_shape = 0.0;
  EXPECT_THROW(p.validate(), idf::ContractError);
  p.beta_shape = 1.0;
  p.table[0].cells[0][0].p01 = 1.5;
  EXPECT_THROW(p.validate(), idf::ContractError);
}

}  // namespace
