// Command-line front end: the full study pipeline plus one subcommand per stage.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "idf/pipeline.hpp"
#include "idf/synthetic.hpp"

namespace {

namespace fs = std::filesystem;

/// Writes to a file, or to stdout when the path is empty or "-".
class Output {
 public:
  explicit Output(const std::string& path) {
    if (path.empty() || path == "-") return;
    file_ = std::make_unique<std::ofstream>(path);
    if (!*file_) throw idf::Error("cannot write '" + path + "'");
  }
  std::ostream& stream() { return file_ ? *file_ : std::cout; }

 private:
  std::unique_ptr<std::ofstream> file_;
};

using SeriesKey = std::pair<std::string, int>;  // station, duration

std::map<SeriesKey, std::vector<idf::AnnualMaxSeries>> group_by_cell(const std::vector<idf::AnnualMaxSeries>& all) {
  std::map<SeriesKey, std::vector<idf::AnnualMaxSeries>> out;
  for (const auto& s : all) out[{s.station_id(), s.duration_h()}].push_back(s);
  return out;
}

const idf::AnnualMaxSeries& single_reference(const std::map<SeriesKey, std::vector<idf::AnnualMaxSeries>>& groups,
                                              const SeriesKey& key, const char* role) {
  const auto it = groups.find(key);
  if (it == groups.end()) {
    throw idf::ValidationError(std::string("no ") + role + " series for station " + key.first + ", " +
                               std::to_string(key.second) + " h");
  }
  if (it->second.size() != 1) {
    throw idf::ValidationError(std::string(role) + " file has several series for station " + key.first + ", " +
                               std::to_string(key.second) + " h");
  }
  return it->second.front();
}

bool keep(const std::vector<std::string>& stations, const std::vector<int>& durations, const idf::AnnualMaxSeries& s) {
  const bool station_ok = stations.empty() || std::find(stations.begin(), stations.end(), s.station_id()) != stations.end();
  const bool duration_ok =
      durations.empty() || std::find(durations.begin(), durations.end(), s.duration_h()) != durations.end();
  return station_ok && duration_ok;
}

std::vector<idf::AnnualMaxSeries> load_filtered(const std::string& path, const std::vector<std::string>& stations,
                                                const std::vector<int>& durations) {
  std::vector<idf::AnnualMaxSeries> out;
  for (auto& s : idf::load_annual_max_csv(path)) {
    if (keep(stations, durations, s)) out.push_back(std::move(s));
  }
  if (out.empty()) throw idf::ValidationError("no annual-maximum series selected from '" + path + "'");
  return out;
}

idf::QmMethod pick_method(const std::string& method, const idf::AnnualMaxSeries& model, const idf::AnnualMaxSeries& obs) {
  if (method != "auto") return idf::parse_qm_method(method);
  std::optional<double> best;
  idf::QmMethod choice = idf::QmMethod::gev;
  for (auto m : {idf::QmMethod::gev, idf::QmMethod::kde}) {
    try {
      const auto corrected = idf::qm_historical(model, obs, m);
      const idf::EnsembleSet ens({corrected});
      const double s = idf::skill_score(idf::taylor_stats(corrected, obs, ens));
      if (!best || s > *best) {
        best = s;
        choice = m;
      }
    } catch (const idf::Error&) {
    }
  }
  if (!best) throw idf::EstimationError("neither correction method succeeded for " + model.station_id());
  return choice;
}

struct SamplerOptions {
  int chains = idf::SamplerConfig{}.chains;
  int iterations = idf::SamplerConfig{}.iterations;
  std::string shape_prior = "flat";

  void add(CLI::App* app) {
    app->add_option("--chains", chains, "DE-MC chains")->capture_default_str();
    app->add_option("--iterations", iterations, "iterations per chain")->capture_default_str();
    app->add_option("--shape-prior", shape_prior, "flat or geophysical")
        ->check(CLI::IsMember({"flat", "geophysical"}))
        ->capture_default_str();
  }
  idf::SamplerConfig config() const {
    idf::SamplerConfig c;
    c.chains = chains;
    c.iterations = iterations;
    c.max_iterations = std::max(c.max_iterations, iterations);
    c.shape_prior = shape_prior == "flat" ? idf::ShapePrior::flat : idf::ShapePrior::geophysical;
    c.validate();
    return c;
  }
};

std::vector<idf::ModelKind> kinds_from(const std::string& text) {
  if (text == "both") return {idf::ModelKind::stationary, idf::ModelKind::nonstationary};
  return {idf::parse_model_kind(text)};
}

idf::GevPosterior fit(const idf::AnnualMaxSeries& s, idf::ModelKind kind, const idf::SamplerConfig& cfg,
                      std::uint64_t seed, const std::string& period) {
  const auto child = idf::derive_seed(seed, s.station_id(), s.duration_h(), "fit", period, s.source_tag(),
                                      idf::to_string(kind));
  return idf::fit_demc(s, kind, cfg, child);
}

/// Year,value series for the trend subcommand from either CSV layout.
std::vector<std::pair<std::string, std::vector<idf::YearValue>>> load_trend_input(const std::string& path,
                                                                                  const std::vector<std::string>& stations,
                                                                                  const std::vector<int>& durations) {
  const auto table = idf::csv::read_file(path);
  std::vector<std::pair<std::string, std::vector<idf::YearValue>>> out;
  if (table.has_column("intensity_mm_per_h")) {
    for (const auto& s : load_filtered(path, stations, durations)) {
      out.emplace_back(s.station_id() + "," + std::to_string(s.duration_h()) + "," + s.source_tag(),
                       idf::year_values(s));
    }
    return out;
  }
  const auto c_id = table.column("series_id"), c_year = table.column("year"), c_value = table.column("value");
  std::map<std::string, std::vector<idf::YearValue>> groups;
  for (const auto& row : table.rows) {
    groups[row.fields[c_id]].push_back({static_cast<int>(idf::csv::to_int(row.fields[c_year], row.line)),
                                        idf::csv::to_double(row.fields[c_value], row.line)});
  }
  for (auto& [id, values] : groups) {
    std::sort(values.begin(), values.end(), [](const auto& a, const auto& b) { return a.year < b.year; });
    out.emplace_back(id, std::move(values));
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Rainfall intensity-duration-frequency study tools"};
  app.require_subcommand(1);

  std::uint64_t seed = 1;
  bool seed_given = false;
  std::vector<std::string> stations;
  std::vector<int> durations;
  auto add_filters = [&](CLI::App* sub) {
    sub->add_option("--stations", stations, "station ids to keep")->delimiter(',');
    sub->add_option("--durations", durations, "durations (h) to keep")->delimiter(',');
  };
  auto add_seed = [&](CLI::App* sub) {
    sub->add_option_function<std::uint64_t>("--seed", [&](const std::uint64_t& v) {
      seed = v;
      seed_given = true;
    }, "master seed");
  };

  // pipeline
  auto* pipeline = app.add_subcommand("pipeline", "run the full study from a JSON config");
  std::string config_path, out_dir;
  int workers = -1;
  pipeline->add_option("--config", config_path, "study config (JSON)")->required()->check(CLI::ExistingFile);
  pipeline->add_option("--out", out_dir, "output directory")->required();
  pipeline->add_option("--workers", workers, "worker threads (0: all cores)");
  add_seed(pipeline);
  add_filters(pipeline);

  // synth
  auto* synth = app.add_subcommand("synth", "write a synthetic study (inputs and config)");
  idf::synth::StudyOptions synth_opts;
  std::string synth_dir;
  synth->add_option("--out", synth_dir, "directory for data and study.json")->required();
  synth->add_option("--n-stations", synth_opts.stations, "number of stations")->capture_default_str();
  synth->add_option("--models", synth_opts.models, "models per station")->capture_default_str();
  synth->add_option("--future-factor", synth_opts.future_factor, "future amount scaling")->capture_default_str();
  add_seed(synth);

  // disagg-calibrate
  auto* calib = app.add_subcommand("disagg-calibrate", "estimate cascade parameters from sub-daily data");
  std::string calib_in, calib_out;
  int calib_res = 3600, calib_steps = 5, calib_years = 35;
  calib->add_option("--input", calib_in, "depth CSV")->required()->check(CLI::ExistingFile);
  calib->add_option("--resolution", calib_res, "input box length (s)")->capture_default_str();
  calib->add_option("--steps", calib_steps, "cascade steps")->capture_default_str();
  calib->add_option("--min-years", calib_years, "minimum years of complete data")->capture_default_str();
  calib->add_option("--out", calib_out, "parameter JSON (default stdout)");

  // disagg-apply
  auto* apply = app.add_subcommand("disagg-apply", "disaggregate daily depths with calibrated parameters");
  std::string apply_params, apply_in, apply_out;
  double apply_threshold = idf::kWetThresholdMm;
  apply->add_option("--params", apply_params, "parameter JSON")->required()->check(CLI::ExistingFile);
  apply->add_option("--input", apply_in, "daily depth CSV")->required()->check(CLI::ExistingFile);
  apply->add_option("--wet-threshold", apply_threshold, "daily depths below this are dry (mm)")->capture_default_str();
  apply->add_option("--out", apply_out, "fine depth CSV (default stdout)");
  add_seed(apply);

  // annual-max
  auto* am = app.add_subcommand("annual-max", "extract annual-maximum intensities");
  std::string am_in, am_out, am_tag = "observed";
  int am_res = 3600;
  am->add_option("--input", am_in, "depth CSV")->required()->check(CLI::ExistingFile);
  am->add_option("--resolution", am_res, "input box length (s)")->capture_default_str();
  am->add_option("--source-tag", am_tag, "source tag for the output")->capture_default_str();
  am->add_option("--out", am_out, "annual-maximum CSV (default stdout)");
  add_filters(am);

  // bias-correct
  auto* bias = app.add_subcommand("bias-correct", "quantile-map model annual maxima");
  std::string bias_model, bias_obs, bias_hist, bias_out, bias_method = "gev", bias_stage = "historical";
  bias->add_option("--model", bias_model, "model annual maxima to correct")->required()->check(CLI::ExistingFile);
  bias->add_option("--obs", bias_obs, "observed annual maxima")->required()->check(CLI::ExistingFile);
  bias->add_option("--model-hist", bias_hist, "historical model maxima (projected stage)")->check(CLI::ExistingFile);
  bias->add_option("--method", bias_method, "gev, kde or auto")
      ->check(CLI::IsMember({"gev", "kde", "auto"}))
      ->capture_default_str();
  bias->add_option("--stage", bias_stage, "historical or projected")
      ->check(CLI::IsMember({"historical", "projected"}))
      ->capture_default_str();
  bias->add_option("--out", bias_out, "corrected annual maxima (default stdout)");
  add_filters(bias);

  // fit-gev
  auto* fitgev = app.add_subcommand("fit-gev", "DE-MC posterior of GEV parameters");
  std::string fit_in, fit_out, fit_kind = "both", fit_period = "baseline";
  SamplerOptions fit_sampler;
  fitgev->add_option("--input", fit_in, "annual-maximum CSV")->required()->check(CLI::ExistingFile);
  fitgev->add_option("--kind", fit_kind, "stationary, nonstationary or both")
      ->check(CLI::IsMember({"stationary", "nonstationary", "both"}))
      ->capture_default_str();
  fitgev->add_option("--period", fit_period, "period label used in seeds and output")->capture_default_str();
  fitgev->add_option("--out", fit_out, "fit CSV (default stdout)");
  fit_sampler.add(fitgev);
  add_seed(fitgev);
  add_filters(fitgev);

  // idf
  auto* idfcmd = app.add_subcommand("idf", "return-level table from annual maxima");
  std::string idf_in, idf_out, idf_kind = "both", idf_period = "baseline";
  std::vector<double> idf_periods{2, 5, 10, 25, 50};
  SamplerOptions idf_sampler;
  idfcmd->add_option("--input", idf_in, "annual-maximum CSV")->required()->check(CLI::ExistingFile);
  idfcmd->add_option("--kind", idf_kind, "stationary, nonstationary or both")
      ->check(CLI::IsMember({"stationary", "nonstationary", "both"}))
      ->capture_default_str();
  idfcmd->add_option("--period", idf_period, "period label")->capture_default_str();
  idfcmd->add_option("--return-periods", idf_periods, "return periods (years)")->delimiter(',');
  idfcmd->add_option("--out", idf_out, "IDF CSV (default stdout)");
  idf_sampler.add(idfcmd);
  add_seed(idfcmd);
  add_filters(idfcmd);

  // trend
  auto* trend = app.add_subcommand("trend", "Mann-Kendall test and Sen slope");
  std::string trend_in, trend_out;
  bool trend_plain = false;
  trend->add_option("--input", trend_in, "annual-maximum CSV or series_id,year,value CSV")
      ->required()
      ->check(CLI::ExistingFile);
  trend->add_flag("--no-autocorrelation-correction", trend_plain, "plain variance");
  trend->add_option("--out", trend_out, "trend CSV (default stdout)");
  add_filters(trend);

  // skill
  auto* skill = app.add_subcommand("skill", "Taylor statistics and skill score against observations");
  std::string skill_model, skill_obs, skill_out, skill_stage = "raw";
  skill->add_option("--model", skill_model, "model annual maxima (all members)")->required()->check(CLI::ExistingFile);
  skill->add_option("--obs", skill_obs, "observed annual maxima")->required()->check(CLI::ExistingFile);
  skill->add_option("--stage", skill_stage, "label for the stage column")->capture_default_str();
  skill->add_option("--out", skill_out, "skill CSV (default stdout)");
  add_filters(skill);

  // change
  auto* change = app.add_subcommand("change", "baseline vs future return-level change");
  std::string change_base, change_fut, change_out;
  std::vector<double> change_periods{2, 5, 10, 25, 50};
  SamplerOptions change_sampler;
  change->add_option("--baseline", change_base, "baseline annual maxima")->required()->check(CLI::ExistingFile);
  change->add_option("--future", change_fut, "future annual maxima")->required()->check(CLI::ExistingFile);
  change->add_option("--return-periods", change_periods, "return periods (years)")->delimiter(',');
  change->add_option("--out", change_out, "change CSV (default stdout)");
  change_sampler.add(change);
  add_seed(change);
  add_filters(change);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*pipeline) {
      auto config = idf::filter_config(idf::load_study_config(config_path), stations, durations);
      if (seed_given) config.master_seed = seed;
      if (workers >= 0) config.workers = workers;
      const auto summary = idf::run_pipeline(config, out_dir);
      for (const auto& f : summary.failures) {
        std::cerr << "failed: " << f.station;
        if (f.duration_h > 0) std::cerr << " " << f.duration_h << "h";
        std::cerr << " [" << f.stage << "] " << f.message << '\n';
      }
      std::cerr << summary.cells_total - summary.cells_failed() << "/" << summary.cells_total
                << " cells succeeded; outputs in " << out_dir << '\n';
      return summary.exit_code();
    }
    if (*synth) {
      synth_opts.seed = seed;
      std::cout << idf::synth::write_study(synth_dir, synth_opts).string() << '\n';
      return 0;
    }
    if (*calib) {
      idf::CalibrationOptions opts;
      opts.min_years = calib_years;
      const auto params = idf::calibrate(idf::load_depth_csv(calib_in, calib_res), calib_steps, opts);
      for (const auto& w : params.warnings) std::cerr << "warning: " << w << '\n';
      Output out(calib_out);
      out.stream() << idf::to_json(params).dump(2) << '\n';
      return 0;
    }
    if (*apply) {
      std::ifstream in(apply_params);
      const auto params = idf::cascade_params_from_json(nlohmann::json::parse(in));
      const auto daily = idf::apply_wet_threshold(idf::load_depth_csv(apply_in, idf::kSecondsPerDay), apply_threshold);
      Output out(apply_out);
      idf::write_depth_csv(out.stream(), idf::disaggregate(daily, params, idf::derive_seed(seed, "disagg")));
      return 0;
    }
    if (*am) {
      const auto series = idf::load_depth_csv(am_in, am_res);
      const std::vector<int> ds = durations.empty() ? std::vector<int>(idf::kStandardDurations.begin(),
                                                                       idf::kStandardDurations.end())
                                                    : durations;
      Output out(am_out);
      idf::write_annual_max_header(out.stream());
      for (int d : ds) {
        const bool exact = (d * 3600) % am_res == 0;
        const auto s = exact ? idf::extract_annual_max(series, d, am_tag)
                             : idf::interpolate_resolution(series, d * 3600, am_tag);
        if (keep(stations, {}, s)) idf::write_annual_max_rows(out.stream(), s);
      }
      return 0;
    }
    if (*bias) {
      const auto models = load_filtered(bias_model, stations, durations);
      const auto obs = group_by_cell(load_filtered(bias_obs, stations, durations));
      std::map<SeriesKey, std::vector<idf::AnnualMaxSeries>> hist;
      if (bias_stage == "projected") {
        if (bias_hist.empty()) throw idf::ValidationError("--model-hist is required for the projected stage");
        hist = group_by_cell(load_filtered(bias_hist, stations, durations));
      }
      Output out(bias_out);
      idf::write_annual_max_header(out.stream());
      for (const auto& m : models) {
        const SeriesKey key{m.station_id(), m.duration_h()};
        const auto& o = single_reference(obs, key, "observed");
        if (bias_stage == "historical") {
          idf::write_annual_max_rows(out.stream(), idf::qm_historical(m, o, pick_method(bias_method, m, o)));
          continue;
        }
        const auto it = hist.find(key);
        if (it == hist.end()) throw idf::ValidationError("no historical model series for " + key.first);
        const auto h = std::find_if(it->second.begin(), it->second.end(),
                                    [&](const auto& s) { return s.source_tag() == m.source_tag(); });
        if (h == it->second.end()) throw idf::ValidationError("no historical series tagged " + m.source_tag());
        const auto pc = idf::eqm_projected(m, *h, o, pick_method(bias_method, *h, o));
        if (pc.equiratio_fallback) {
          std::cerr << "warning: " << key.first << " " << key.second << "h " << m.source_tag()
                    << ": equiratio fallback\n";
        }
        idf::write_annual_max_rows(out.stream(), pc.series);
      }
      return 0;
    }
    if (*fitgev) {
      const auto cfg = fit_sampler.config();
      std::vector<idf::FitRow> rows;
      for (const auto& s : load_filtered(fit_in, stations, durations)) {
        for (auto kind : kinds_from(fit_kind)) rows.push_back(idf::fit_row(fit_period, s, fit(s, kind, cfg, seed, fit_period)));
      }
      Output out(fit_out);
      idf::write_fit_csv(out.stream(), rows);
      return 0;
    }
    if (*idfcmd) {
      const auto cfg = idf_sampler.config();
      std::vector<idf::IdfRow> rows;
      for (const auto& s : load_filtered(idf_in, stations, durations)) {
        for (auto kind : kinds_from(idf_kind)) {
          const auto post = fit(s, kind, cfg, seed, idf_period);
          for (double T : idf_periods) {
            const auto rl = idf::return_level(post, T);
            rows.push_back({s.station_id(), s.duration_h(), T, idf_period, s.source_tag(), kind, rl.q05, rl.q50, rl.q95});
          }
        }
      }
      Output out(idf_out);
      idf::write_idf_csv(out.stream(), rows);
      return 0;
    }
    if (*trend) {
      Output out(trend_out);
      idf::csv::Writer w(out.stream());
      w.row("series", "n", "s", "variance_s", "z", "p_value", "sen_slope_per_decade", "significant_10pct",
            "autocorrelation_factor");
      for (const auto& [id, values] : load_trend_input(trend_in, stations, durations)) {
        const auto r = idf::mann_kendall(values, !trend_plain);
        w.row(id, values.size(), r.s_statistic, r.variance_s, r.z, r.p_value, r.sen_slope_per_decade,
              r.significant_10pct, r.autocorrelation_factor);
      }
      return 0;
    }
    if (*skill) {
      const auto obs = group_by_cell(load_filtered(skill_obs, stations, durations));
      std::vector<idf::SkillRow> rows;
      for (const auto& [key, members] : group_by_cell(load_filtered(skill_model, stations, durations))) {
        const auto& o = single_reference(obs, key, "observed");
        const idf::EnsembleSet ens(idf::align_on_common_years(members));
        auto add = [&](const idf::AnnualMaxSeries& s) {
          idf::SkillRow r{key.first, key.second, skill_stage, s.source_tag(), idf::taylor_stats(s, o, ens), 0.0};
          r.skill = idf::skill_score(r.stats);
          rows.push_back(r);
        };
        for (const auto& m : ens.members()) add(m);
        if (ens.size() > 1) {
          const auto st = idf::ensemble_stats(ens);
          for (const auto* s : {&st.mm_min, &st.mm_med, &st.mm_max}) add(*s);
        }
      }
      Output out(skill_out);
      idf::write_skill_csv(out.stream(), rows);
      return 0;
    }
    if (*change) {
      const auto cfg = change_sampler.config();
      const auto future = load_filtered(change_fut, stations, durations);
      std::vector<idf::ChangeRow> rows;
      for (const auto& b : load_filtered(change_base, stations, durations)) {
        const auto f = std::find_if(future.begin(), future.end(), [&](const auto& s) {
          return s.station_id() == b.station_id() && s.duration_h() == b.duration_h() && s.source_tag() == b.source_tag();
        });
        if (f == future.end()) continue;
        std::map<idf::ModelKind, idf::GevPosterior> bp, fp;
        for (auto kind : kinds_from("both")) {
          bp.emplace(kind, fit(b, kind, cfg, seed, "baseline"));
          fp.emplace(kind, fit(*f, kind, cfg, seed, "future"));
        }
        auto r = idf::change_rows(b.station_id(), b.duration_h(), bp, fp, change_periods);
        rows.insert(rows.end(), r.begin(), r.end());
      }
      if (rows.empty()) throw idf::ValidationError("no baseline series has a matching future series");
      Output out(change_out);
      idf::write_change_csv(out.stream(), rows);
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
