// Acceptance suite: one PASS/FAIL line per criterion.
//
// Usage: acceptance [--only N[,N...]] [--known-failures N[,N...]] [--work DIR]
// Exit status is 0 when the set of failing criteria equals the known-failure
// set, so a known red criterion stays visible without masking regressions.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "idf/bias.hpp"
#include "idf/cascade.hpp"
#include "idf/demc.hpp"
#include "idf/gev.hpp"
#include "idf/pipeline.hpp"
#include "idf/random.hpp"
#include "idf/synthetic.hpp"
#include "idf/trend.hpp"

namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = true;
  std::vector<std::string> notes;

  void check(bool ok, const std::string& what) {
    pass = pass && ok;
    notes.push_back(std::string(ok ? "" : "NOT MET: ") + what);
  }
};

std::string fmt(double v, int precision = 4) {
  std::ostringstream s;
  s.precision(precision);
  s << v;
  return s.str();
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

idf::AnnualMaxSeries gev_sample(const idf::GevParams& p, int n, std::uint64_t seed, int first_year = 1970) {
  idf::Philox4x32 rng(seed);
  std::vector<idf::AnnualMax> e;
  for (int i = 0; i < n; ++i) {
    e.push_back({first_year + i, std::max(idf::gev_quantile(rng.uniform(), p, static_cast<double>(i)), 1e-3)});
  }
  return idf::AnnualMaxSeries("ACC", 1, std::move(e));
}

idf::AnnualMaxSeries am_from(const std::vector<double>& values, const std::string& tag = "observed") {
  std::vector<idf::AnnualMax> e;
  for (std::size_t i = 0; i < values.size(); ++i) e.push_back({1000 + static_cast<int>(i), values[i]});
  return idf::AnnualMaxSeries("ACC", 1, std::move(e), tag);
}

// 1 -------------------------------------------------------------------------
Outcome gev_round_trip() {
  Outcome o;
  idf::Philox4x32 rng(2024);
  double worst = 0.0;
  const auto t0 = Clock::now();
  for (int k = 0; k < 1000; ++k) {
    const idf::GevParams p{-20 + 80 * rng.uniform(), 0.0, 0.1 + 15 * rng.uniform(), -0.5 + rng.uniform()};
    idf::GevPosterior post;
    post.samples = {p};
    for (double T : {2.0, 5.0, 10.0, 25.0, 50.0}) {
      worst = std::max(worst, std::abs(idf::gev_cdf(idf::return_level(post, T).q50, p) - (1.0 - 1.0 / T)));
    }
  }
  const double secs = seconds_since(t0);
  o.check(worst <= 1e-10, "max |F(z_T) - (1-1/T)| = " + fmt(worst) + " (<= 1e-10)");
  o.check(secs < 1.0, "runtime " + fmt(secs) + " s (< 1 s)");
  return o;
}

// 2 -------------------------------------------------------------------------
Outcome posterior_recovery() {
  Outcome o;
  const idf::GevParams truth{21.38, 0.0, 7.59, -0.10};
  // Four independent n = 1000 data sets; each must converge within the time
  // budget and the parameter check uses the mean of their posterior medians.
  const int reps = 4;
  double mu = 0, sigma = 0, xi = 0, worst_rhat = 0, worst_secs = 0;
  std::string per_rep;
  for (int r = 0; r < reps; ++r) {
    const auto data = gev_sample(truth, 1000, 101 + r);
    const auto t0 = Clock::now();
    const auto post = idf::fit_demc(data, idf::ModelKind::stationary, {}, 7 + r);
    worst_secs = std::max(worst_secs, seconds_since(t0));
    for (double h : post.diagnostics.rhat) worst_rhat = std::max(worst_rhat, h);
    const auto m = post.median_params();
    mu += m.mu0 / reps;
    sigma += m.sigma / reps;
    xi += m.xi / reps;
    per_rep += (r ? "; " : "") + fmt(m.mu0) + "/" + fmt(m.sigma) + "/" + fmt(m.xi, 3);
  }
  o.check(std::abs(mu - truth.mu0) <= 0.02 * truth.mu0, "mu " + fmt(mu) + " (21.38 +-2%)");
  o.check(std::abs(sigma - truth.sigma) <= 0.05 * truth.sigma, "sigma " + fmt(sigma) + " (7.59 +-5%)");
  o.check(std::abs(xi - truth.xi) <= 0.05, "xi " + fmt(xi, 3) + " (-0.10 +-0.05)");
  o.check(worst_rhat < 1.1, "max R-hat " + fmt(worst_rhat) + " (< 1.1)");
  o.check(worst_secs < 30.0, "slowest fit " + fmt(worst_secs, 3) + " s (< 30 s)");
  o.notes.push_back("replicate medians mu/sigma/xi: " + per_rep);
  return o;
}

// 3 -------------------------------------------------------------------------
Outcome coverage() {
  Outcome o;
  const idf::GevParams truth{21.38, 0.0, 7.59, -0.10};
  int cover_mu = 0, cover_sigma = 0, cover_xi = 0;
  const auto t0 = Clock::now();
  for (int k = 0; k < 100; ++k) {
    const auto post = idf::fit_demc(gev_sample(truth, 41, 5000 + k), idf::ModelKind::stationary, {}, 9000 + k);
    auto covers = [&](const char* name, double v) {
      return post.parameter_quantile(name, 0.05) <= v && v <= post.parameter_quantile(name, 0.95);
    };
    cover_mu += covers("mu0", truth.mu0);
    cover_sigma += covers("sigma", truth.sigma);
    cover_xi += covers("xi", truth.xi);
  }
  const double secs = seconds_since(t0);
  o.check(cover_mu >= 80, "mu covered " + std::to_string(cover_mu) + "/100");
  o.check(cover_sigma >= 80, "sigma covered " + std::to_string(cover_sigma) + "/100");
  o.check(cover_xi >= 80, "xi covered " + std::to_string(cover_xi) + "/100");
  o.check(secs < 1800.0, "runtime " + fmt(secs, 3) + " s (< 30 min)");
  return o;
}

// 4 -------------------------------------------------------------------------
Outcome nonstationary_detection() {
  Outcome o;
  idf::GevParams trend{21.38, 0.2, 7.59, -0.10};
  const auto data = gev_sample(trend, 200, 11);
  const auto non = idf::fit_demc(data, idf::ModelKind::nonstationary, {}, 12);
  const auto sta = idf::fit_demc(data, idf::ModelKind::stationary, {}, 13);
  const double lo = non.parameter_quantile("mu1", 0.05), hi = non.parameter_quantile("mu1", 0.95);
  o.check(lo > 0.0 || hi < 0.0, "trend: mu1 90% CI [" + fmt(lo) + ", " + fmt(hi) + "] excludes 0");
  const double a_non = idf::aicc(data, non), a_sta = idf::aicc(data, sta);
  o.check(a_non < a_sta, "trend: AICc nonstationary " + fmt(a_non) + " < stationary " + fmt(a_sta));

  trend.mu1 = 0.0;
  const auto flat = idf::fit_demc(gev_sample(trend, 200, 21), idf::ModelKind::nonstationary, {}, 22);
  const double flo = flat.parameter_quantile("mu1", 0.05), fhi = flat.parameter_quantile("mu1", 0.95);
  o.check(flo <= 0.0 && 0.0 <= fhi, "trend-free: mu1 90% CI [" + fmt(flo) + ", " + fmt(fhi) + "] includes 0");
  return o;
}

// 5 -------------------------------------------------------------------------
idf::DepthSeries wet_dry_days(int first_year, int count, std::uint64_t seed) {
  idf::Philox4x32 rng(seed);
  std::vector<idf::DepthRecord> recs;
  int y = first_year, d = 1;
  for (int i = 0; i < count; ++i) {
    recs.push_back({{y, d, 0}, rng.uniform() < 0.4 ? 0.2 + idf::exponential_variate(rng, 8.0) : 0.0});
    if (++d > idf::days_in_year(idf::Calendar::gregorian, y)) {
      d = 1;
      ++y;
    }
  }
  return idf::DepthSeries("ACC", idf::kSecondsPerDay, std::move(recs));
}

Outcome cascade() {
  Outcome o;
  const auto t0 = Clock::now();
  const auto days = wet_dry_days(1980, 10000, 31);
  const auto fine = idf::disaggregate(days, idf::uniform_cascade(5, 0.3, 0.5), 32);
  std::map<std::pair<int, int>, double> sums;
  for (const auto& r : fine.records()) sums[{r.stamp.year, r.stamp.day_of_year}] += r.depth_mm;
  double worst = 0.0;
  for (const auto& r : days.records()) {
    if (r.depth_mm > 0.0) worst = std::max(worst, std::abs(sums[{r.stamp.year, r.stamp.day_of_year}] - r.depth_mm) / r.depth_mm);
  }
  o.check(worst <= 1e-9, "mass: max relative error " + fmt(worst) + " over 10000 days");

  const double true_beta = 0.5;
  const int years = 35;
  const auto calib_days = wet_dry_days(1970, static_cast<int>(idf::day_ordinal(idf::Calendar::gregorian, 1970 + years, 1) -
                                                               idf::day_ordinal(idf::Calendar::gregorian, 1970, 1)),
                                       33);
  const auto p = idf::calibrate(idf::disaggregate(calib_days, idf::uniform_cascade(5, 0.3, true_beta), 34), 5);
  double worst_p01 = 0.0;
  for (int k = 1; k <= 5; ++k) worst_p01 = std::max(worst_p01, std::abs(p.at(k).pooled_p01 - 0.3));
  o.check(worst_p01 <= 0.03, "pooled P01 max |error| " + fmt(worst_p01) + " (<= 0.03, all 5 steps)");
  o.check(std::abs(p.beta_shape - true_beta) <= 0.3 * true_beta,
          "beta shape " + fmt(p.beta_shape) + " (0.5 +-30%)");
  const double secs = seconds_since(t0);
  o.check(secs < 60.0, "runtime " + fmt(secs, 3) + " s (< 1 min)");
  return o;
}

// 6 -------------------------------------------------------------------------
Outcome bias_correction() {
  Outcome o;
  idf::Philox4x32 rng(61);
  const idf::GevParams g{20, 0, 6, 0.05};
  std::vector<double> obs(2000), model(2000);
  for (auto& v : obs) v = idf::gev_quantile(rng.uniform(), g);
  for (auto& v : model) v = idf::gev_quantile(rng.uniform(), g) + 10.0;
  const auto corrected = idf::qm_historical(am_from(model, "model:M"), am_from(obs), idf::QmMethod::kde).values();
  const double ks_before = idf::ks_distance(model, obs), ks_after = idf::ks_distance(corrected, obs);
  o.check(ks_after < 0.05, "KDE-QM KS " + fmt(ks_before) + " -> " + fmt(ks_after) + " (< 0.05)");

  std::vector<double> hist(41), proj(41);
  for (auto& v : hist) v = idf::gev_quantile(rng.uniform(), g);
  for (auto& v : proj) v = idf::gev_quantile(rng.uniform(), {25, 0, 7, 0.1});
  double worst_eqm = 0.0;
  for (auto method : {idf::QmMethod::gev, idf::QmMethod::kde}) {
    const auto out = idf::eqm_projected(am_from(proj, "model:M"), am_from(hist, "model:M"), am_from(hist), method);
    const auto v = out.series.values();
    for (std::size_t i = 0; i < v.size(); ++i) worst_eqm = std::max(worst_eqm, std::abs(v[i] - proj[i]));
  }
  o.check(worst_eqm <= 1e-9, "EQM identity max |error| " + fmt(worst_eqm) + " (<= 1e-9)");

  // Adversarial: tiny projected values, heavy-tailed historical model, tiny observations.
  int fixtures = 0, nonpositive = 0;
  for (int k = 0; k < 60; ++k) {
    std::vector<double> a(30), b(30), c(30);
    const idf::GevParams pa{0.5 + k * 0.1, 0, 0.3 + 0.05 * k, -0.45 + 0.015 * k};
    const idf::GevParams pb{40, 0, 15, 0.45};
    const idf::GevParams pc{1 + 0.02 * k, 0, 0.5, 0.3};
    for (auto& v : a) v = std::max(idf::gev_quantile(rng.uniform(), pa), 1e-6);
    for (auto& v : b) v = std::max(idf::gev_quantile(rng.uniform(), pb), 1e-6);
    for (auto& v : c) v = std::max(idf::gev_quantile(rng.uniform(), pc), 1e-6);
    for (auto method : {idf::QmMethod::gev, idf::QmMethod::kde}) {
      ++fixtures;
      try {
        const auto out = idf::eqr_projected(am_from(a, "model:M"), am_from(b, "model:M"), am_from(c), method).values();
        for (double v : out) nonpositive += (v > 0.0 && std::isfinite(v)) ? 0 : 1;
      } catch (const idf::Error&) {
        ++nonpositive;
      }
    }
  }
  o.check(nonpositive == 0,
          "EQR strictly positive on " + std::to_string(fixtures) + " adversarial fixtures (" + std::to_string(nonpositive) +
              " violations)");
  return o;
}

// 7 -------------------------------------------------------------------------
std::vector<idf::YearValue> with_years(const std::vector<double>& x) {
  std::vector<idf::YearValue> out;
  for (std::size_t i = 0; i < x.size(); ++i) out.push_back({1970 + static_cast<int>(i), x[i]});
  return out;
}

Outcome mann_kendall() {
  Outcome o;
  idf::Philox4x32 rng(71);
  int mismatches = 0;
  for (int k = 0; k < 500; ++k) {
    const int n = 2 + static_cast<int>(rng.uniform() * 11);  // 2..12
    std::vector<double> x(static_cast<std::size_t>(n));
    // Coarse values so ties occur.
    for (auto& v : x) v = std::floor(rng.uniform() * 6.0);
    long long brute = 0;
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        if (j > i) brute += (x[j] > x[i]) - (x[j] < x[i]);
      }
    }
    mismatches += idf::mann_kendall_s(x) != brute;
  }
  o.check(mismatches == 0, "S formula vs pair counting: " + std::to_string(mismatches) + " mismatches in 500 series");

  const int reps = 2000;
  int rejected = 0;
  for (int r = 0; r < reps; ++r) {
    std::vector<double> x(41);
    double v = idf::standard_normal(rng) / std::sqrt(1.0 - 0.25);
    for (auto& e : x) {
      v = 0.5 * v + idf::standard_normal(rng);
      e = v;
    }
    rejected += idf::mann_kendall(with_years(x)).significant_10pct;
  }
  const double size = rejected / static_cast<double>(reps);
  o.check(std::abs(size - 0.10) <= 0.03, "Hamed-Rao size on AR(1) rho=0.5, n=41, 2000 reps: " + fmt(size) +
                                              " (0.10 +-0.03)");

  std::vector<idf::YearValue> line;
  for (int t = 0; t < 30; ++t) line.push_back({1970 + t, 2.0 * (1970 + t)});
  const double slope = idf::theil_sen(line);
  o.check(slope == 2.0, "Theil-Sen on y = 2t: " + fmt(slope, 17));
  return o;
}

// 8 -------------------------------------------------------------------------
Outcome skill_anchors() {
  Outcome o;
  const double r0 = 0.7;
  const double s1 = idf::skill_score(1.0, r0, r0);
  const double s2 = idf::skill_score(1.0, 0.0, 1.0);
  o.check(std::abs(s1 - 1.0) <= 1e-12, "S(1, R0) = " + fmt(s1, 15));
  o.check(std::abs(s2 - 0.5) <= 1e-12, "S(1, 0; R0=1) = " + fmt(s2, 15));
  bool monotone = true;
  double prev = 0.0;
  for (int i = 0; i < 50; ++i) {
    const double log_s = 3.0 * i / 49.0;
    const double up = idf::skill_score(std::exp(log_s), 0.4, r0);
    const double down = idf::skill_score(std::exp(-log_s), 0.4, r0);
    monotone = monotone && std::abs(up - down) <= 1e-12 && (i == 0 || up < prev);
    prev = up;
  }
  o.check(monotone, "strictly decreasing in |ln s| on a 50-point grid, ln s in [0, 3] both signs (R=0.4, R0=0.7)");
  return o;
}

// 9 -------------------------------------------------------------------------
Outcome change_statistic() {
  Outcome o;
  const auto c = idf::change_z(50.0, 40.0, 25.0, 25.0);
  o.check(std::abs(c.z - 2.0) <= 1e-12 && c.significant_5pct && c.significant_10pct,
          "Z(50, 40, 25, 25) = " + fmt(c.z, 15) + ", both flags set");
  bool gates = true;
  for (double z : {-2.5, -1.97, -1.96, -1.8, -1.65, -1.64, -1.0, 0.0, 1.0, 1.64, 1.65, 1.8, 1.96, 1.97, 2.5}) {
    const auto r = idf::change_z(40.0 + z * 5.0, 40.0, 25.0, 25.0);
    const double az = std::abs(r.z);
    gates = gates && r.significant_5pct == (az > 1.96) && r.significant_10pct == (az > 1.64);
  }
  o.check(gates, "flags follow |z| > 1.96 and |z| > 1.64 on 15 probe values");
  return o;
}

// 10 ------------------------------------------------------------------------
std::map<std::string, std::string> read_tree(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    files[fs::relative(e.path(), root).string()] = ss.str();
  }
  return files;
}

Outcome end_to_end(const fs::path& work) {
  Outcome o;
  fs::remove_all(work);
  idf::synth::StudyOptions opts;  // 8 stations, both windows, all durations, T in {2,5,10,25,50}
  opts.seed = 2025;
  opts.future_factor = 1.15;
  const auto t0 = Clock::now();
  const auto config_path = idf::synth::write_study(work / "study", opts);
  const auto config = idf::load_study_config(config_path);
  const auto a = idf::run_pipeline(config, work / "run_a");
  const double first = seconds_since(t0);
  const auto b = idf::run_pipeline(config, work / "run_b");
  const auto ta = read_tree(work / "run_a"), tb = read_tree(work / "run_b");
  o.check(a.exit_code() == 0 && b.exit_code() == 0,
          "cells succeeded: " + std::to_string(a.cells_total - a.cells_failed()) + "/" + std::to_string(a.cells_total));
  o.check(first < 900.0, "first run incl. data generation " + fmt(first, 4) + " s (< 15 min)");
  o.check(ta == tb && ta.size() == 6 + 1 + 40 + 8,
          std::to_string(ta.size()) + " output files, byte-identical across reruns: " + (ta == tb ? "yes" : "no"));
  return o;
}

std::set<int> parse_list(const std::string& text) {
  std::set<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.insert(std::stoi(item));
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only, known;
  fs::path work = fs::temp_directory_path() / "idf_acceptance";
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--only" && i + 1 < argc) {
      only = parse_list(argv[++i]);
    } else if (arg == "--known-failures" && i + 1 < argc) {
      known = parse_list(argv[++i]);
    } else if (arg == "--work" && i + 1 < argc) {
      work = argv[++i];
    } else {
      std::cerr << "usage: acceptance [--only N,...] [--known-failures N,...] [--work DIR]\n";
      return 64;
    }
  }

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"GEV round-trip", gev_round_trip},
      {"posterior recovery", posterior_recovery},
      {"credible-interval coverage", coverage},
      {"nonstationary detection", nonstationary_detection},
      {"cascade conservation and calibration", cascade},
      {"bias correction", bias_correction},
      {"Mann-Kendall", mann_kendall},
      {"skill score anchors", skill_anchors},
      {"change statistic", change_statistic},
      {"end-to-end determinism", [&] { return end_to_end(work); }},
  };

  std::set<int> failed;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    const int id = static_cast<int>(k + 1);
    if (!only.empty() && !only.count(id)) continue;
    const auto t0 = Clock::now();
    Outcome out;
    try {
      out = criteria[k].second();
    } catch (const std::exception& e) {
      out.check(false, std::string("exception: ") + e.what());
    }
    if (!out.pass) failed.insert(id);
    std::string detail;
    for (const auto& n : out.notes) detail += (detail.empty() ? "" : "; ") + n;
    std::printf("%s criterion %2d %-38s %7.2fs  %s\n", out.pass ? "PASS" : "FAIL", id, criteria[k].first.c_str(),
                seconds_since(t0), detail.c_str());
    std::fflush(stdout);
  }

  std::set<int> expected;
  for (int id : known) {
    if (only.empty() || only.count(id)) expected.insert(id);
  }
  const std::size_t run = only.empty() ? criteria.size() : only.size();
  std::printf("%zu/%zu criteria passed", run - failed.size(), run);
  if (!expected.empty()) {
    std::printf("; known failures:");
    for (int id : expected) std::printf(" %d", id);
  }
  std::printf("\n");
  if (failed != expected) {
    std::printf("failing set differs from the known-failure set\n");
    return 1;
  }
  return 0;
}
