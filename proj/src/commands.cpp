#include "cmpmort/commands.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "cmpmort/errors.hpp"
#include "cmpmort/math_utils.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace cmpmort {

namespace {

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create output directory " + dir);
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_manifest(const std::string& dir, const std::string& command,
                    const RunConfig& cfg) {
  json m;
  m["tool"] = "cmpmort";
  m["version"] = kToolVersion;
  m["command"] = command;
  m["config"] = cfg.raw;
  std::ofstream out(dir + "/manifest.json");
  if (!out) throw DataError("cannot write manifest in " + dir);
  out << m.dump(2) << "\n";
}

void write_acceptance(const std::string& path, const PosteriorSamples& samples) {
  std::ofstream out(path);
  out << "chain,block,proposals,accepted,rate\n";
  for (int c = 0; c < samples.n_chains(); ++c) {
    for (const auto& st : samples.chains[c].acceptance) {
      out << c + 1 << "," << st.name << "," << st.proposals << "," << st.accepted << ","
          << fmt(st.rate()) << "\n";
    }
  }
}

void write_convergence(const std::string& path, const PosteriorSamples& samples) {
  const auto names =
      param_names(samples.structure, samples.likelihood, samples.A, samples.T, samples.C);
  std::ofstream out(path);
  out << "parameter,psrf";
  for (int c = 0; c < samples.n_chains(); ++c) out << ",geweke_z." << c + 1;
  out << "\n";
  for (const auto& name : names) {
    out << name;
    if (samples.n_chains() >= 2) {
      std::vector<std::vector<double>> traces;
      for (const auto& ch : samples.chains) traces.push_back(trace(ch.draws, name));
      out << "," << fmt(psrf(traces));
    } else {
      out << ",nan";
    }
    for (const auto& ch : samples.chains) {
      const auto tr = trace(ch.draws, name);
      if (tr.size() >= 100) {
        out << "," << fmt(geweke_z(tr));
      } else {
        out << ",nan";
      }
    }
    out << "\n";
  }
}

// Gaussian kernel density with Silverman bandwidth, evaluated on a grid.
std::vector<double> kde(const std::vector<double>& xs, const std::vector<double>& grid) {
  const double n = static_cast<double>(xs.size());
  const double sd = std::sqrt(variance_of(xs));
  std::vector<double> sorted(xs);
  std::sort(sorted.begin(), sorted.end());
  const double iqr = quantile_sorted(sorted, 0.75) - quantile_sorted(sorted, 0.25);
  double bw = 0.9 * std::min(sd, iqr / 1.34) * std::pow(n, -0.2);
  if (!(bw > 0.0)) bw = std::max(sd, 1e-6);
  std::vector<double> dens(grid.size(), 0.0);
  const double norm = 1.0 / (n * bw * std::sqrt(2.0 * M_PI));
  for (std::size_t g = 0; g < grid.size(); ++g) {
    double s = 0.0;
    for (double x : xs) {
      const double z = (grid[g] - x) / bw;
      s += std::exp(-0.5 * z * z);
    }
    dens[g] = s * norm;
  }
  return dens;
}

std::vector<const ModelParams*> subsample(const std::vector<const ModelParams*>& pool,
                                          int want) {
  if (want <= 0 || want >= static_cast<int>(pool.size())) return pool;
  std::vector<const ModelParams*> out;
  out.reserve(want);
  const double step = static_cast<double>(pool.size()) / want;
  for (int i = 0; i < want; ++i) out.push_back(pool[static_cast<std::size_t>(i * step)]);
  return out;
}

void svg_fan_chart(const std::string& path, int age_label,
                   const std::vector<int>& obs_years, const std::vector<double>& obs_rates,
                   const std::vector<int>& hold_years, const std::vector<double>& hold_rates,
                   const std::vector<int>& pred_years, const std::vector<double>& q025,
                   const std::vector<double>& q50, const std::vector<double>& q975) {
  double lo = 1e300, hi = -1e300;
  int year_lo = obs_years.front(), year_hi = obs_years.front();
  const auto scan = [&](const std::vector<int>& ys, const std::vector<double>& vs) {
    for (std::size_t i = 0; i < ys.size(); ++i) {
      if (vs[i] > 0.0) {
        lo = std::min(lo, std::log10(vs[i]));
        hi = std::max(hi, std::log10(vs[i]));
      }
      year_lo = std::min(year_lo, ys[i]);
      year_hi = std::max(year_hi, ys[i]);
    }
  };
  scan(obs_years, obs_rates);
  scan(hold_years, hold_rates);
  scan(pred_years, q025);
  scan(pred_years, q975);
  if (!(hi > lo)) hi = lo + 1.0;
  const double w = 640, h = 400, m = 45;
  const auto px = [&](int year) {
    return m + (w - 2 * m) * (year - year_lo) / std::max(1, year_hi - year_lo);
  };
  const auto py = [&](double rate) {
    const double z = rate > 0.0 ? std::log10(rate) : lo;
    return h - m - (h - 2 * m) * (z - lo) / (hi - lo);
  };
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
      << "\">\n<text x=\"10\" y=\"18\" font-size=\"13\">age " << age_label
      << ", log10 crude rate</text>\n";
  const auto polyline = [&](const std::vector<int>& ys, const std::vector<double>& vs,
                            const char* style) {
    out << "<polyline fill=\"none\" " << style << " points=\"";
    for (std::size_t i = 0; i < ys.size(); ++i) out << px(ys[i]) << "," << py(vs[i]) << " ";
    out << "\"/>\n";
  };
  polyline(pred_years, q025, "stroke=\"#377eb8\" stroke-dasharray=\"4 3\"");
  polyline(pred_years, q975, "stroke=\"#377eb8\" stroke-dasharray=\"4 3\"");
  polyline(pred_years, q50, "stroke=\"#377eb8\" stroke-width=\"1.7\"");
  for (std::size_t i = 0; i < obs_years.size(); ++i) {
    out << "<circle cx=\"" << px(obs_years[i]) << "\" cy=\"" << py(obs_rates[i])
        << "\" r=\"2\" fill=\"#333333\"/>\n";
  }
  for (std::size_t i = 0; i < hold_years.size(); ++i) {
    out << "<circle cx=\"" << px(hold_years[i]) << "\" cy=\"" << py(hold_rates[i])
        << "\" r=\"2\" fill=\"#e41a1c\"/>\n";
  }
  out << "</svg>\n";
}

}  // namespace

std::vector<std::string> default_sensitivity_grid() {
  return {"gamma:1,100", "gamma:1,10", "gamma:1,1", "gamma:1,0.1", "gamma:1,0.01", "flat"};
}

void cmd_fit(const RunConfig& cfg) {
  ensure_dir(cfg.output_dir);
  const MortalityDataset ds = cfg.load_dataset();
  const PosteriorSamples samples = run_mcmc(ds, cfg.structure, cfg.likelihood, cfg.prior,
                                            cfg.mcmc, cfg.threads);

  for (int c = 0; c < samples.n_chains(); ++c) {
    std::ofstream out(cfg.output_dir + "/chain_" + std::to_string(c + 1) + ".csv");
    if (!out) throw DataError("cannot write chain CSV in " + cfg.output_dir);
    write_chain_csv(samples.chains[c].draws, samples.structure, samples.likelihood, out);
  }
  write_acceptance(cfg.output_dir + "/acceptance.csv", samples);
  write_convergence(cfg.output_dir + "/convergence.csv", samples);
  write_manifest(cfg.output_dir, "fit", cfg);

  double worst_psrf = 0.0;
  if (samples.n_chains() >= 2) {
    for (const auto& name : {std::string("rho"), std::string("sigma2_kappa")}) {
      std::vector<std::vector<double>> traces;
      for (const auto& ch : samples.chains) traces.push_back(trace(ch.draws, name));
      worst_psrf = std::max(worst_psrf, psrf(traces));
    }
  }
  std::cout << "fit complete: " << samples.n_chains() << " chain(s), "
            << samples.chains.front().draws.size() << " stored draws each, "
            << samples.wall_seconds << " s";
  if (samples.n_chains() >= 2) std::cout << ", psrf(hyper) " << worst_psrf;
  std::cout << "\n";
}

LoadedRun load_run(const std::string& run_dir) {
  std::ifstream in(run_dir + "/manifest.json");
  if (!in) throw DataError("no manifest.json in " + run_dir);
  json m;
  in >> m;
  std::map<std::string, std::string> raw = m.at("config");

  LoadedRun run{make_run_config(raw), {}, {}};
  run.dataset = run.config.load_dataset();

  run.samples.structure = run.config.structure;
  run.samples.likelihood = run.config.likelihood;
  run.samples.A = run.dataset.n_ages();
  run.samples.T = run.dataset.n_years();
  run.samples.C = run.dataset.n_cohorts();
  run.samples.config = run.config.mcmc;
  for (int c = 1;; ++c) {
    const std::string path = run_dir + "/chain_" + std::to_string(c) + ".csv";
    std::ifstream chain_in(path);
    if (!chain_in) break;
    ChainOutput ch;
    ch.draws = read_chain_csv(chain_in, run.samples.structure, run.samples.likelihood,
                              run.samples.A, run.samples.T, run.samples.C);
    run.samples.chains.push_back(std::move(ch));
  }
  if (run.samples.chains.empty()) throw DataError("no chain CSVs in " + run_dir);
  return run;
}

std::string cmd_diagnose(const std::string& run_dir) {
  const LoadedRun run = load_run(run_dir);
  const ResidualSurface surface = pearson_surface(
      run.dataset, run.samples.pooled(), run.samples.likelihood, run.config.residual_variance);
  const ChiSquareVerdict verdict = chi_square_verdict(surface);

  export_grid(surface.r2, run.dataset.ages, run.dataset.years, run_dir + "/residuals.csv",
              GridFormat::Csv);
  export_grid(surface.r2, run.dataset.ages, run.dataset.years, run_dir + "/residuals.svg",
              GridFormat::SvgHeatmap);
  std::ofstream out(run_dir + "/verdict.txt");
  out << verdict.line << "\n";
  return verdict.line;
}

void cmd_forecast(const std::string& run_dir, int horizon, std::vector<int> fan_ages) {
  const LoadedRun run = load_run(run_dir);
  const auto pool = subsample(run.samples.pooled(), run.config.forecast_draws);

  const ForecastResult fitted =
      fitted_rates(run.dataset, pool, run.samples.likelihood, run.config.mcmc.seed);
  const Eigen::MatrixXd* hold_exp = nullptr;
  Eigen::MatrixXd hold_exp_store;
  if (run.dataset.holdout) {
    hold_exp_store = run.dataset.holdout->exposures;
    hold_exp = &hold_exp_store;
  }
  const ForecastResult proj = project(run.dataset, pool, run.samples.likelihood, horizon,
                                      hold_exp, run.config.locf_exposure,
                                      run.config.mcmc.seed + 1);

  std::ofstream out(run_dir + "/forecast.csv");
  out << "age,year,quantile,value\n";
  const auto dump = [&](const ForecastResult& r) {
    for (int x = 0; x < r.n_ages(); ++x) {
      for (int y = 0; y < r.n_years(); ++y) {
        out << run.dataset.ages[x] << "," << r.year_labels[y] << ",0.025,"
            << fmt(r.rate_q025(x, y)) << "\n";
        out << run.dataset.ages[x] << "," << r.year_labels[y] << ",0.5,"
            << fmt(r.rate_q50(x, y)) << "\n";
        out << run.dataset.ages[x] << "," << r.year_labels[y] << ",0.975,"
            << fmt(r.rate_q975(x, y)) << "\n";
      }
    }
  };
  dump(fitted);
  dump(proj);

  if (run.dataset.holdout) {
    const CoverageTable table = coverage_table(proj, *run.dataset.holdout);
    std::ofstream cov(run_dir + "/coverage.csv");
    cov << "age,coverage\n";
    for (int x = 0; x < run.dataset.n_ages(); ++x) {
      cov << run.dataset.ages[x] << "," << fmt(table.per_age_coverage[x]) << "\n";
    }
    cov << "overall," << fmt(table.overall_coverage) << "\n";
    cov << "mean_log_width," << fmt(table.mean_log_width) << "\n";
  }

  if (fan_ages.empty()) {
    const int A = run.dataset.n_ages();
    fan_ages = {run.dataset.ages[0], run.dataset.ages[A / 2], run.dataset.ages[A - 1]};
  }
  for (int age : fan_ages) {
    const auto it = std::find(run.dataset.ages.begin(), run.dataset.ages.end(), age);
    if (it == run.dataset.ages.end()) throw DataError("fan chart age not in dataset");
    const int x = static_cast<int>(it - run.dataset.ages.begin());
    std::vector<double> obs, hold;
    std::vector<int> hold_years;
    for (int t = 0; t < run.dataset.n_years(); ++t) {
      obs.push_back(run.dataset.deaths(x, t) / run.dataset.exposures(x, t));
    }
    if (run.dataset.holdout) {
      for (int t = 0; t < run.dataset.holdout->n_years(); ++t) {
        hold_years.push_back(run.dataset.holdout->years[t]);
        hold.push_back(run.dataset.holdout->deaths(x, t) /
                       run.dataset.holdout->exposures(x, t));
      }
    }
    std::vector<int> pred_years(fitted.year_labels);
    pred_years.insert(pred_years.end(), proj.year_labels.begin(), proj.year_labels.end());
    std::vector<double> q025, q50, q975;
    for (int y = 0; y < fitted.n_years(); ++y) {
      q025.push_back(fitted.rate_q025(x, y));
      q50.push_back(fitted.rate_q50(x, y));
      q975.push_back(fitted.rate_q975(x, y));
    }
    for (int y = 0; y < proj.n_years(); ++y) {
      q025.push_back(proj.rate_q025(x, y));
      q50.push_back(proj.rate_q50(x, y));
      q975.push_back(proj.rate_q975(x, y));
    }
    svg_fan_chart(run_dir + "/fan_age_" + std::to_string(age) + ".svg", age,
                  run.dataset.years, obs, hold_years, hold, pred_years, q025, q50, q975);
  }
}

void cmd_score(const std::string& run_dir) {
  const LoadedRun run = load_run(run_dir);
  if (!run.dataset.holdout) throw DataError("score: dataset has no holdout block");
  const auto pool = subsample(run.samples.pooled(), run.config.forecast_draws);
  const int h = run.dataset.holdout->n_years();
  const Eigen::MatrixXd hold_exp = run.dataset.holdout->exposures;
  const ForecastResult proj = project(run.dataset, pool, run.samples.likelihood, h,
                                      &hold_exp, false, run.config.mcmc.seed + 1);
  const ScoreReport rep = predictive_scores(*run.dataset.holdout, proj);

  std::ofstream out(run_dir + "/scores.csv");
  out << "metric,value\nlogs," << fmt(rep.logs) << "\ncrps," << fmt(rep.crps) << "\ndss,"
      << fmt(rep.dss) << "\ndegenerate_cells," << rep.degenerate_cells << "\n";
  export_grid(rep.logs_cells, run.dataset.ages, run.dataset.holdout->years,
              run_dir + "/logs_cells.csv", GridFormat::Csv);
  export_grid(rep.crps_cells, run.dataset.ages, run.dataset.holdout->years,
              run_dir + "/crps_cells.csv", GridFormat::Csv);
  export_grid(rep.dss_cells, run.dataset.ages, run.dataset.holdout->years,
              run_dir + "/dss_cells.csv", GridFormat::Csv);
}

void cmd_sensitivity(const RunConfig& cfg, const std::vector<std::string>& prior_grid) {
  ensure_dir(cfg.output_dir);
  const MortalityDataset ds = cfg.load_dataset();
  if (cfg.likelihood != Likelihood::CMP) {
    throw ConfigError("sensitivity: requires model.likelihood = cmp");
  }

  std::vector<std::string> labels;
  std::vector<std::vector<double>> nu_draws;
  std::exception_ptr first_error;
  for (const auto& label : prior_grid) {
    RunConfig sub = cfg;
    sub.prior.nu_prior = parse_nu_prior(label);
    try {
      const PosteriorSamples s = run_mcmc(ds, sub.structure, sub.likelihood, sub.prior,
                                          sub.mcmc, sub.threads);
      std::vector<double> nu;
      for (const auto& ch : s.chains) {
        const auto tr = trace(ch.draws, "nu");
        nu.insert(nu.end(), tr.begin(), tr.end());
      }
      labels.push_back(label);
      nu_draws.push_back(std::move(nu));
    } catch (...) {
      if (!first_error) first_error = std::current_exception();
      std::cerr << "sensitivity: run failed for prior " << label << "\n";
    }
  }

  if (!nu_draws.empty()) {
    double lo = 1e300, hi = -1e300;
    for (const auto& xs : nu_draws) {
      for (double v : xs) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    }
    const double pad = 0.1 * (hi - lo + 1e-6);
    std::vector<double> grid(512);
    for (int i = 0; i < 512; ++i) grid[i] = lo - pad + (hi - lo + 2 * pad) * i / 511.0;

    std::ofstream out(cfg.output_dir + "/sensitivity.csv");
    out << "nu";
    for (const auto& l : labels) out << "," << l;
    out << "\n";
    std::vector<std::vector<double>> dens;
    for (const auto& xs : nu_draws) dens.push_back(kde(xs, grid));
    for (int i = 0; i < 512; ++i) {
      out << fmt(grid[i]);
      for (const auto& d : dens) out << "," << fmt(d[i]);
      out << "\n";
    }
  }
  write_manifest(cfg.output_dir, "sensitivity", cfg);
  if (first_error) std::rethrow_exception(first_error);
}

void cmd_simulate(const RunConfig& cfg) {
  ensure_dir(cfg.output_dir);
  const MortalityDataset ds = cfg.load_dataset();
  Eigen::MatrixXd deaths = ds.deaths.cast<double>();
  export_grid(deaths, ds.ages, ds.years, cfg.output_dir + "/deaths.csv", GridFormat::Csv);
  export_grid(ds.exposures, ds.ages, ds.years, cfg.output_dir + "/exposures.csv",
              GridFormat::Csv);
  if (ds.holdout) {
    Eigen::MatrixXd hd = ds.holdout->deaths.cast<double>();
    export_grid(hd, ds.holdout->ages, ds.holdout->years,
                cfg.output_dir + "/holdout_deaths.csv", GridFormat::Csv);
    export_grid(ds.holdout->exposures, ds.holdout->ages, ds.holdout->years,
                cfg.output_dir + "/holdout_exposures.csv", GridFormat::Csv);
  }
  write_manifest(cfg.output_dir, "simulate", cfg);
}

}  // namespace cmpmort
