// Command-line front end: simulate, sweep, metrics, pde1d, report.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>
#include <omp.h>

#include "vpfp/config.hpp"
#include "vpfp/dynamics.hpp"
#include "vpfp/metrics.hpp"
#include "vpfp/snapshot.hpp"
#include "vpfp/sweep.hpp"
#include "vpfp/vp1d.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out;
  int threads = -1;
};

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

vpfp::ExperimentConfig load(const Common& common) {
  const std::string text = common.config_path.empty() ? std::string("{}") : read_text(common.config_path);
  std::vector<std::string> overrides = common.overrides;
  if (!common.out.empty()) overrides.push_back("out=" + json(common.out).dump());
  if (common.threads >= 0) overrides.push_back("threads=" + std::to_string(common.threads));
  vpfp::ExperimentConfig config = vpfp::parse_config(vpfp::apply_overrides(text, overrides));
  const int threads = vpfp::resolve_threads(config.threads);
  if (threads > 0) omp_set_num_threads(threads);
  return config;
}

int simulate(const vpfp::ExperimentConfig& c) {
  vpfp::CoupledConfig cc;
  const std::size_t n = c.n.front();
  cc.n = n;
  cc.kernel = c.kernel_spec(n);
  cc.initial = c.initial;
  cc.sde.sigma = c.sigma.front();
  cc.sde.t_end = c.t_end;
  cc.sde.seed = c.seeds.front();
  cc.sde.force_path = c.force_path;
  cc.sde.dt = c.dt ? *c.dt : vpfp::default_time_step(vpfp::Kernel(cc.kernel));
  cc.mean_field_copies = std::max(c.mean_field_copies, n);
  cc.refresh_every = c.refresh_every;
  cc.mean_field = c.mean_field;
  cc.output_times = c.output_times;
  const vpfp::CoupledRun run = vpfp::run_coupled(cc);

  fs::create_directories(c.out);
  std::string csv = "step,t,deviation\n";
  for (const auto& r : run.deviations)
    csv += std::to_string(r.step) + "," + vpfp::format_number(r.t) + "," + vpfp::format_number(r.deviation) + "\n";
  vpfp::write_file_atomic((fs::path(c.out) / "deviations.csv").string(), csv);
  for (std::size_t k = 0; k < run.phi.size(); ++k) {
    vpfp::write_snapshot((fs::path(c.out) / ("phi_t" + std::to_string(k) + ".vpfp")).string(), run.phi[k]);
    vpfp::write_snapshot((fs::path(c.out) / ("psi_t" + std::to_string(k) + ".vpfp")).string(), run.psi[k]);
  }
  json summary = {{"N", run.n},
                  {"delta", run.delta},
                  {"sigma", run.sigma},
                  {"family", std::string(vpfp::to_string(run.family))},
                  {"seed", run.seed},
                  {"dt", run.dt},
                  {"sup_deviation", run.sup_deviation()},
                  {"output_times", run.output_times},
                  {"running_sup", run.running_sup},
                  {"box_halfwidth", run.box_halfwidth},
                  {"max_clipped_mass", run.max_clipped_mass},
                  {"clipped_flag", run.clipped_flag}};
  vpfp::write_file_atomic((fs::path(c.out) / "run.json").string(), summary.dump(2) + "\n");
  std::cout << summary.dump(2) << "\n";
  return 0;
}

int metrics(const std::string& phi_path, const std::string& psi_path, const vpfp::ExperimentConfig& c) {
  const auto a = std::get<vpfp::PhaseState>(vpfp::read_snapshot(phi_path));
  const auto b = std::get<vpfp::PhaseState>(vpfp::read_snapshot(psi_path));
  if (a.n != b.n || a.dim != b.dim) throw vpfp::ConfigError("metrics: snapshots differ in shape");
  json out = {{"N", a.n}, {"t", a.t}, {"deviation", vpfp::coupling_deviation(a, b, static_cast<double>(a.n))}};
  if (a.n <= vpfp::kExactW2Max) {
    out["w2"] = vpfp::wasserstein2_exact(a.x, b.x, a.dim);
  } else {
    const auto s = vpfp::wasserstein2_sliced(a.x, b.x, a.dim, 256, 0);
    out["w2"] = s.corrected;
    out["w2_sliced_std_error"] = s.std_error;
  }
  auto [p, q] = vpfp::phase_histograms(a, b, c.phase_grid);
  const double h1 = vpfp::kl_divergence(p, q);
  const double l1 = vpfp::l1_distance(p, q);
  out["h1"] = h1;
  out["l1"] = l1;
  out["ckp_slack"] = vpfp::ckp_slack(l1, h1, 1);
  std::cout << out.dump(2) << "\n";
  return 0;
}

int pde1d(const vpfp::ExperimentConfig& c) {
  if (c.dim != 1) throw vpfp::ConfigError("pde1d requires dim = 1");
  const vpfp::InitialDensitySpec spec = c.initial;
  vpfp::KineticGrid1D grid =
      vpfp::KineticGrid1D::from_density(-6.0, 6.0, -6.0, 6.0, 256, 256, [&](double x, double v) {
        return vpfp::density_eval(spec, vpfp::Vec{x, 0.0, 0.0}, vpfp::Vec{v, 0.0, 0.0});
      });
  vpfp::Vp1dOptions opts;
  opts.sigma = c.sigma.front();
  opts.sign = c.sign;
  opts.c1 = 1.0 / vpfp::unit_sphere_area(1);
  const double dt = c.dt ? *c.dt : 0.9 * vpfp::cfl_limit(grid, opts);
  const std::vector<double> times = c.output_times.empty() ? vpfp::default_output_times(c.t_end) : c.output_times;
  fs::create_directories(c.out);
  std::string csv = "t,mass,momentum,kinetic_energy,v_variance,total_energy,outflow,clipped\n";
  for (std::size_t k = 0; k < times.size(); ++k) {
    if (times[k] > grid.t) grid = vpfp::solve_vp1d(std::move(grid), dt, times[k], opts);
    const vpfp::Moments1D m = vpfp::moments(grid);
    csv += vpfp::format_number(grid.t) + "," + vpfp::format_number(m.mass) + "," + vpfp::format_number(m.momentum) +
           "," + vpfp::format_number(m.kinetic_energy) + "," + vpfp::format_number(m.v_variance) + "," +
           vpfp::format_number(vpfp::total_energy(grid, opts)) + "," + vpfp::format_number(grid.outflow) + "," +
           vpfp::format_number(grid.clipped) + "\n";
    vpfp::write_snapshot((fs::path(c.out) / ("kinetic_t" + std::to_string(k) + ".vpfp")).string(), grid);
  }
  vpfp::write_file_atomic((fs::path(c.out) / "moments.csv").string(), csv);
  std::cout << csv;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Particle laboratory for the regularized Coulomb interacting system and its mean-field limit"};
  app.require_subcommand(1);
  Common common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config_path, "JSON experiment config")->check(CLI::ExistingFile);
    sub->add_option("--set", common.overrides, "override a config field, dotted.path=json_value")->take_all();
    sub->add_option("--out", common.out, "output directory");
    sub->add_option("--threads", common.threads, "worker threads (0 = runtime default)")->check(CLI::NonNegativeNumber);
  };

  auto* sim = app.add_subcommand("simulate", "one coupled run (first N, sigma and seed of the config)");
  add_common(sim);
  auto* sweep = app.add_subcommand("sweep", "every (N, sigma, seed) cell; writes sweep.csv and summary.json");
  add_common(sweep);
  auto* met = app.add_subcommand("metrics", "metrics between two phase-state snapshots");
  add_common(met);
  std::string phi_path, psi_path;
  met->add_option("phi", phi_path, "interacting-system snapshot")->required()->check(CLI::ExistingFile);
  met->add_option("psi", psi_path, "mean-field snapshot")->required()->check(CLI::ExistingFile);
  auto* pde = app.add_subcommand("pde1d", "d = 1 kinetic solve from the config's initial density");
  add_common(pde);
  auto* rep = app.add_subcommand("report", "summarize sweep CSV files");
  std::vector<std::string> csv_paths;
  std::string report_out;
  rep->add_option("csv", csv_paths, "sweep CSV files")->required()->check(CLI::ExistingFile);
  rep->add_option("--out", report_out, "write the summary here instead of stdout");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*rep) {
      const std::string summary = vpfp::report(csv_paths) + "\n";
      if (report_out.empty())
        std::cout << summary;
      else
        vpfp::write_file_atomic(report_out, summary);
      return 0;
    }
    const vpfp::ExperimentConfig config = load(common);
    if (*sim) return simulate(config);
    if (*sweep) {
      const vpfp::SweepTable table = vpfp::run_sweep(config);
      std::size_t failed = 0;
      for (const auto& r : table.rows) failed += r.status == "failed";
      std::cout << "wrote " << table.rows.size() << " rows to " << (fs::path(config.out) / "sweep.csv").string()
                << " (" << failed << " failed cells)\n";
      return 0;
    }
    if (*met) return metrics(phi_path, psi_path, config);
    if (*pde) return pde1d(config);
  } catch (const vpfp::ConfigViolations& e) {
    std::cerr << "invalid config:\n";
    for (const auto& v : e.violations()) std::cerr << "  " << v << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
