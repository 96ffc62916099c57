#include "vpfp/sweep.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>
#include <omp.h>

#include "vpfp/dynamics.hpp"
#include "vpfp/initial_data.hpp"
#include "vpfp/metrics.hpp"
#include "vpfp/snapshot.hpp"
#include "vpfp/vp1d.hpp"

namespace vpfp {

using nlohmann::json;

namespace {

constexpr const char* kFixedColumns[] = {"schema_version", "N", "delta", "sigma", "seed", "t", "step", "status"};
constexpr std::size_t kSlicedProjections = 256;

std::string sanitize(std::string text) {
  for (char& c : text)
    if (c == ',' || c == '"' || c == '\n' || c == '\r') c = c == ',' ? ';' : ' ';
  return text;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    out.push_back(line.substr(start, pos == std::string::npos ? std::string::npos : pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

template <class T>
bool parse_number(const std::string& text, T& out) {
  const char* first = text.data();
  const char* last = first + text.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

bool parse_double(const std::string& text, double& out) {
  if (text == "nan") {
    out = std::numeric_limits<double>::quiet_NaN();
    return true;
  }
  if (text == "inf" || text == "-inf") {
    out = text[0] == '-' ? -std::numeric_limits<double>::infinity() : std::numeric_limits<double>::infinity();
    return true;
  }
  return parse_number(text, out);
}

std::vector<double> positions_only(const PhaseState& s) { return s.x; }

// vp1d reference at the requested times, on the default 256^2 box
std::vector<KineticGrid1D> pde_reference(const ExperimentConfig& c, const std::vector<double>& times) {
  const InitialDensitySpec spec = c.initial;
  KineticGrid1D grid = KineticGrid1D::from_density(-6.0, 6.0, -6.0, 6.0, 256, 256, [&](double x, double v) {
    return density_eval(spec, Vec{x, 0.0, 0.0}, Vec{v, 0.0, 0.0});
  });
  Vp1dOptions opts;
  opts.sigma = 0.0;
  opts.sign = c.sign;
  opts.c1 = 1.0 / unit_sphere_area(1);
  const double vmax = std::max(std::abs(grid.v_lo), std::abs(grid.v_hi));
  const double dt = 0.9 * std::min(grid.dx() / vmax, grid.dv() / opts.c1);
  std::vector<KineticGrid1D> out;
  double t = 0.0;
  for (double tau : times) {
    if (tau > t) {
      grid = solve_vp1d(std::move(grid), dt, tau, opts);
      t = tau;
    }
    out.push_back(grid);
  }
  return out;
}

DensityGrid coarse_grain(const DensityGrid& fine, const GridGeometry& coarse) {
  DensityGrid out(coarse);
  const GridGeometry& g = fine.geometry;
  for (std::size_t i = 0; i < g.cells[0]; ++i) {
    for (std::size_t j = 0; j < g.cells[1]; ++j) {
      const double p[2] = {g.center(0, i), g.center(1, j)};
      const auto c = out.locate(p);
      if (c >= 0) out.mass[static_cast<std::size_t>(c)] += fine.mass[i * g.cells[1] + j];
    }
  }
  return out;
}

double pde_distance(const PhaseState& phi, const KineticGrid1D& ref, const PhaseGridOptions& options) {
  const std::array<double, 2> lo{ref.x_lo, ref.v_lo};
  const std::array<double, 2> hi{ref.x_hi, ref.v_hi};
  const std::array<std::size_t, 2> cells{options.cells, options.cells};
  const GridGeometry g = GridGeometry::from_box(lo, hi, cells);
  DensityGrid particles = histogram(phase_points(phi), g);
  DensityGrid pde = coarse_grain(ref.masses(), g);
  particles = kde_smooth(particles, options.bandwidth_cells);
  pde = kde_smooth(pde, options.bandwidth_cells);
  return l1_distance(particles, pde);
}

bool has(const std::vector<Metric>& metrics, Metric m) {
  return std::find(metrics.begin(), metrics.end(), m) != metrics.end();
}

std::vector<SweepRow> run_cell(const ExperimentConfig& c, std::size_t n, double sigma, std::uint64_t seed,
                               const std::vector<KineticGrid1D>* pde) {
  CoupledConfig cc;
  cc.n = n;
  cc.kernel = c.kernel_spec(n);
  cc.initial = c.initial;
  cc.sde.sigma = sigma;
  cc.sde.t_end = c.t_end;
  cc.sde.seed = seed;
  cc.sde.force_path = c.force_path;
  cc.sde.dt = c.dt ? *c.dt : default_time_step(Kernel(cc.kernel));
  cc.mean_field_copies = std::max(c.mean_field_copies, n);
  cc.refresh_every = c.refresh_every;
  cc.mean_field = c.mean_field;
  cc.output_times = c.output_times;
  const CoupledRun run = run_coupled(cc);

  std::vector<SweepRow> rows;
  const double threshold = c.threshold(n);
  for (std::size_t k = 0; k < run.output_times.size(); ++k) {
    SweepRow row;
    row.n = n;
    row.delta = c.delta;
    row.sigma = sigma;
    row.seed = seed;
    row.t = run.output_times[k];
    row.step = run.output_steps[k];
    std::vector<std::string> notes;
    const PhaseState& phi = run.phi[k];
    const PhaseState& psi = run.psi[k];

    std::optional<double> h1, l1;
    if (has(c.metrics, Metric::h1) || has(c.metrics, Metric::l1) || has(c.metrics, Metric::ckp)) {
      auto [p, q] = phase_histograms(phi, psi, c.phase_grid);
      h1 = kl_divergence(p, q);
      l1 = l1_distance(p, q);
    }
    for (Metric m : c.metrics) {
      switch (m) {
        case Metric::deviation:
          row.values.emplace_back(coupling_deviation(phi, psi, static_cast<double>(n)));
          break;
        case Metric::sup_deviation:
          row.values.emplace_back(run.running_sup[k]);
          break;
        case Metric::exceedance:
          row.values.emplace_back(run.running_sup[k] > threshold ? 1.0 : 0.0);
          break;
        case Metric::w2: {
          const auto a = positions_only(phi);
          const auto b = positions_only(psi);
          if (n <= kExactW2Max) {
            row.values.emplace_back(wasserstein2_exact(a, b, c.dim));
          } else {
            const SlicedW2 s = wasserstein2_sliced(a, b, c.dim, kSlicedProjections, seed);
            row.values.emplace_back(s.corrected);
            notes.push_back("w2 sliced se=" + format_number(s.std_error * std::sqrt(static_cast<double>(c.dim))));
          }
          break;
        }
        case Metric::h1:
          row.values.emplace_back(h1);
          break;
        case Metric::l1:
          row.values.emplace_back(l1);
          break;
        case Metric::ckp:
          row.values.emplace_back(ckp_slack(*l1, *h1, 1));
          break;
        case Metric::pde_l1:
          row.values.emplace_back(pde_distance(phi, (*pde)[k], c.phase_grid));
          break;
      }
    }
    if (run.clipped_flag) notes.push_back("mean-field grid clipped " + format_number(run.max_clipped_mass));
    for (std::size_t i = 0; i < notes.size(); ++i) row.note += (i ? "; " : "") + notes[i];
    rows.push_back(std::move(row));

    if (c.snapshots) {
      const auto dir = std::filesystem::path(c.out) / "snapshots";
      std::filesystem::create_directories(dir);
      const std::string stem = "N" + std::to_string(n) + "_sigma" + format_number(sigma) + "_seed" +
                               std::to_string(seed) + "_t" + std::to_string(k);
      write_snapshot((dir / (stem + "_phi.vpfp")).string(), phi);
      write_snapshot((dir / (stem + "_psi.vpfp")).string(), psi);
    }
  }
  return rows;
}

struct Stats {
  double median, q25, q75, mean;
  std::size_t count;
};

Stats stats_of(const std::vector<double>& v) {
  double sum = 0.0;
  for (double x : v) sum += x;
  return {quantile(v, 0.5), quantile(v, 0.25), quantile(v, 0.75), sum / static_cast<double>(v.size()), v.size()};
}

json fit_json(const std::vector<std::pair<double, double>>& pts, std::string& note) {
  std::set<double> distinct;
  for (const auto& p : pts) distinct.insert(p.first);
  if (distinct.size() < 3) {
    note = "insufficient points";
    return nullptr;
  }
  for (const auto& p : pts) {
    if (!(p.second > 0.0)) {
      note = "nonpositive values";
      return nullptr;
    }
  }
  const RateFit f = fit_rate(pts);
  return {{"slope", f.slope},
          {"intercept", f.intercept},
          {"r2", f.r2},
          {"slope_ci_low", f.slope_ci_low},
          {"slope_ci_high", f.slope_ci_high},
          {"points", f.points}};
}

}  // namespace

std::string format_number(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, ptr);
}

std::string csv_header(const std::vector<Metric>& metrics) {
  std::string out;
  for (const char* col : kFixedColumns) out += std::string(col) + ",";
  for (Metric m : metrics) out += std::string(to_string(m)) + ",";
  return out + "note";
}

std::string format_row(const SweepRow& row) {
  std::string out = std::to_string(kCsvSchemaVersion) + "," + std::to_string(row.n) + "," + format_number(row.delta) +
                    "," + format_number(row.sigma) + "," + std::to_string(row.seed) + ",";
  out += (row.t ? format_number(*row.t) : "") + ",";
  out += (row.step ? std::to_string(*row.step) : "") + ",";
  out += row.status + ",";
  for (const auto& v : row.values) out += (v ? format_number(*v) : "") + ",";
  return out + sanitize(row.note);
}

std::string to_csv(const SweepTable& table) {
  std::string out = csv_header(table.metrics) + "\n";
  for (const SweepRow& row : table.rows) {
    if (row.status == "ok" && row.values.size() != table.metrics.size())
      throw std::logic_error("sweep row has the wrong number of metric values");
    SweepRow padded = row;
    padded.values.resize(table.metrics.size());
    out += format_row(padded) + "\n";
  }
  return out;
}

SweepTable parse_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  SweepTable table;
  if (!std::getline(in, line)) throw CsvError(1, "empty file");
  ++line_no;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const std::vector<std::string> header = split(line, ',');
  const std::size_t fixed = std::size(kFixedColumns);
  if (header.size() < fixed + 1) throw CsvError(1, "header has too few columns");
  for (std::size_t i = 0; i < fixed; ++i)
    if (header[i] != kFixedColumns[i]) throw CsvError(1, "expected column '" + std::string(kFixedColumns[i]) + "'");
  if (header.back() != "note") throw CsvError(1, "last column must be 'note'");
  for (std::size_t i = fixed; i + 1 < header.size(); ++i) {
    try {
      table.metrics.push_back(parse_metric(header[i]));
    } catch (const ConfigError& e) {
      throw CsvError(1, e.what());
    }
  }

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::vector<std::string> f = split(line, ',');
    if (f.size() != header.size())
      throw CsvError(line_no, "expected " + std::to_string(header.size()) + " fields, found " + std::to_string(f.size()));
    SweepRow row;
    int version = 0;
    if (!parse_number(f[0], version) || version != kCsvSchemaVersion)
      throw CsvError(line_no, "unsupported schema_version '" + f[0] + "'");
    if (!parse_number(f[1], row.n)) throw CsvError(line_no, "bad N '" + f[1] + "'");
    if (!parse_double(f[2], row.delta)) throw CsvError(line_no, "bad delta '" + f[2] + "'");
    if (!parse_double(f[3], row.sigma)) throw CsvError(line_no, "bad sigma '" + f[3] + "'");
    if (!parse_number(f[4], row.seed)) throw CsvError(line_no, "bad seed '" + f[4] + "'");
    row.status = f[7];
    if (row.status != "ok" && row.status != "failed") throw CsvError(line_no, "bad status '" + f[7] + "'");
    if (!f[5].empty()) {
      double t = 0.0;
      if (!parse_double(f[5], t)) throw CsvError(line_no, "bad t '" + f[5] + "'");
      row.t = t;
    }
    if (!f[6].empty()) {
      std::size_t s = 0;
      if (!parse_number(f[6], s)) throw CsvError(line_no, "bad step '" + f[6] + "'");
      row.step = s;
    }
    if (row.status == "ok" && (!row.t || !row.step)) throw CsvError(line_no, "ok row without t or step");
    for (std::size_t i = fixed; i + 1 < f.size(); ++i) {
      if (f[i].empty()) {
        row.values.emplace_back();
        continue;
      }
      double v = 0.0;
      if (!parse_double(f[i], v)) throw CsvError(line_no, "bad value '" + f[i] + "' in column " + header[i]);
      row.values.emplace_back(v);
    }
    row.note = f.back();
    table.rows.push_back(std::move(row));
  }
  return table;
}

SweepTable read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream text;
  text << in.rdbuf();
  return parse_csv(text.str());
}

void write_file_atomic(const std::string& path, const std::string& contents) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp + " for writing");
    out << contents;
    if (!out) throw std::runtime_error("write failed for " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

std::pair<DensityGrid, DensityGrid> phase_histograms(const PhaseState& p, const PhaseState& q,
                                                     const PhaseGridOptions& options) {
  if (p.dim != q.dim) throw ConfigError("phase_histograms: dimensions differ");
  const int axes = 2 * p.dim;
  std::vector<double> a = phase_points(p);
  const std::vector<double> b = phase_points(q);
  std::vector<double> both = a;
  both.insert(both.end(), b.begin(), b.end());
  auto [lo, hi] = bounding_box(both, axes, 0.0);
  // pad by half a cell so extreme points sit inside
  std::vector<std::size_t> cells(static_cast<std::size_t>(axes), options.cells);
  for (int k = 0; k < axes; ++k) {
    const double span = std::max(hi[k] - lo[k], 1e-12);
    const double pad = 0.5 * span / static_cast<double>(options.cells);
    lo[k] -= pad;
    hi[k] += pad;
  }
  const GridGeometry g = GridGeometry::from_box(lo, hi, cells);
  return {kde_smooth(histogram(a, g), options.bandwidth_cells), kde_smooth(histogram(b, g), options.bandwidth_cells)};
}

SweepTable run_sweep(const ExperimentConfig& config) {
  const int threads = resolve_threads(config.threads);
  if (threads > 0) omp_set_num_threads(threads);
  std::filesystem::create_directories(config.out);
  const std::string csv_path = (std::filesystem::path(config.out) / "sweep.csv").string();
  write_file_atomic((std::filesystem::path(config.out) / "config.json").string(), to_json(config) + "\n");

  std::vector<KineticGrid1D> pde;
  if (has(config.metrics, Metric::pde_l1)) {
    const std::vector<double> times =
        config.output_times.empty() ? default_output_times(config.t_end) : config.output_times;
    pde = pde_reference(config, times);
  }

  SweepTable table;
  table.metrics = config.metrics;
  write_file_atomic(csv_path, to_csv(table));
  for (std::size_t n : config.n) {
    for (double sigma : config.sigma) {
      for (std::uint64_t seed : config.seeds) {
        try {
          auto rows = run_cell(config, n, sigma, seed, pde.empty() ? nullptr : &pde);
          for (auto& r : rows) table.rows.push_back(std::move(r));
        } catch (const std::exception& e) {
          SweepRow row;
          row.n = n;
          row.delta = config.delta;
          row.sigma = sigma;
          row.seed = seed;
          row.status = "failed";
          row.note = e.what();
          table.rows.push_back(std::move(row));
        }
        write_file_atomic(csv_path, to_csv(table));
      }
    }
  }
  write_file_atomic((std::filesystem::path(config.out) / "summary.json").string(), summarize({table}) + "\n");
  return table;
}

std::string summarize(const std::vector<SweepTable>& tables) {
  json summary;
  summary["schema_version"] = kCsvSchemaVersion;
  json notes = json::array();
  json rows = json::array();
  std::size_t ok = 0, failed = 0;

  // (metric, sigma, t) -> N -> values
  std::map<std::tuple<std::string, double, double>, std::map<std::size_t, std::vector<double>>> groups;
  std::vector<double> ckp_slacks;
  for (const SweepTable& table : tables) {
    for (const SweepRow& row : table.rows) {
      json r = {{"N", row.n}, {"delta", row.delta}, {"sigma", row.sigma}, {"seed", row.seed}, {"status", row.status}};
      if (row.t) r["t"] = *row.t;
      if (row.step) r["step"] = *row.step;
      if (!row.note.empty()) r["note"] = row.note;
      if (row.status != "ok") {
        ++failed;
        rows.push_back(r);
        continue;
      }
      ++ok;
      for (std::size_t i = 0; i < table.metrics.size() && i < row.values.size(); ++i) {
        if (!row.values[i]) continue;
        const std::string name(to_string(table.metrics[i]));
        r[name] = *row.values[i];
        groups[{name, row.sigma, *row.t}][row.n].push_back(*row.values[i]);
        if (table.metrics[i] == Metric::ckp) ckp_slacks.push_back(*row.values[i]);
      }
      rows.push_back(r);
    }
  }
  summary["rows"] = rows;
  summary["row_count"] = ok;
  summary["failed_count"] = failed;
  if (failed > 0) notes.push_back(std::to_string(failed) + " failed cells");

  // the final time per (metric, sigma) carries the fits and verdicts
  std::map<std::pair<std::string, double>, double> final_time;
  for (const auto& [key, by_n] : groups) {
    const auto& [name, sigma, t] = key;
    auto& ft = final_time[{name, sigma}];
    ft = std::max(ft, t);
  }

  json series = json::array();
  json verdicts = json::object();
  std::map<std::size_t, std::map<double, double>> pde_final;  // N -> sigma -> median
  for (const auto& [key, by_n] : groups) {
    const auto& [name, sigma, t] = key;
    json s = {{"metric", name}, {"sigma", sigma}, {"t", t}};
    json points = json::array();
    std::vector<std::pair<double, double>> medians;
    std::vector<double> med_seq, mean_seq;
    for (const auto& [n, values] : by_n) {
      const Stats st = stats_of(values);
      points.push_back(
          {{"N", n}, {"median", st.median}, {"q25", st.q25}, {"q75", st.q75}, {"mean", st.mean}, {"count", st.count}});
      medians.emplace_back(static_cast<double>(n), st.median);
      med_seq.push_back(st.median);
      mean_seq.push_back(st.mean);
    }
    s["points"] = points;
    const bool is_final = t == final_time[{name, sigma}];
    if (is_final && name != "exceedance" && name != "ckp_slack") {
      std::string note;
      s["fit"] = fit_json(medians, note);
      if (!note.empty()) s["note"] = note;
    }
    series.push_back(s);

    if (!is_final) continue;
    const std::string suffix = "sigma=" + format_number(sigma);
    if (name == "sup_deviation" && med_seq.size() >= 2) {
      bool dec = true;
      for (std::size_t i = 1; i < med_seq.size(); ++i) dec = dec && med_seq[i] < med_seq[i - 1];
      verdicts["sup_deviation_median_decreasing/" + suffix] = {{"pass", dec}, {"medians", med_seq}};
      if (s.contains("fit") && !s["fit"].is_null()) {
        const double slope = s["fit"]["slope"];
        verdicts["sup_deviation_slope/" + suffix] = {{"pass", slope <= -0.10}, {"slope", slope}, {"bound", -0.10}};
      }
    }
    if (name == "exceedance" && mean_seq.size() >= 2) {
      bool nonincreasing = true;
      for (std::size_t i = 1; i < mean_seq.size(); ++i) nonincreasing = nonincreasing && mean_seq[i] <= mean_seq[i - 1];
      verdicts["exceedance_nonincreasing/" + suffix] = {{"pass", nonincreasing}, {"frequencies", mean_seq}};
    }
    if (name == "pde_l1") {
      std::size_t k = 0;
      for (const auto& [n, values] : by_n) pde_final[n][sigma] = med_seq[k++];
      if (med_seq.size() >= 2) {
        bool dec = true;
        for (std::size_t i = 1; i < med_seq.size(); ++i) dec = dec && med_seq[i] < med_seq[i - 1];
        verdicts["pde_l1_decreasing_in_n/" + suffix] = {{"pass", dec}, {"medians", med_seq}};
      }
    }
  }
  for (const auto& [n, by_sigma] : pde_final) {
    if (by_sigma.size() < 2) continue;
    // ascending sigma: the distance must not grow as sigma decreases
    bool ok_trend = true;
    std::vector<double> values;
    double prev = -1.0;
    for (const auto& [sigma, v] : by_sigma) {
      values.push_back(v);
      if (prev >= 0.0 && v < prev) ok_trend = false;
      prev = v;
    }
    verdicts["pde_l1_nonincreasing_as_sigma_decreases/N=" + std::to_string(n)] = {{"pass", ok_trend},
                                                                                 {"ascending_sigma_values", values}};
  }
  if (!ckp_slacks.empty()) {
    const double worst = *std::min_element(ckp_slacks.begin(), ckp_slacks.end());
    verdicts["ckp_audit"] = {{"pass", worst >= -kCkpTolerance}, {"min_slack", worst}, {"tolerance", kCkpTolerance}};
  }
  summary["series"] = series;
  summary["verdicts"] = verdicts;
  if (groups.empty() || std::all_of(series.begin(), series.end(), [](const json& s) { return !s.contains("fit") || s["fit"].is_null(); }))
    notes.push_back("insufficient points for rate fits (need 3 distinct N)");
  summary["notes"] = notes;
  return summary.dump(2);
}

std::string report(const std::vector<std::string>& csv_paths) {
  if (csv_paths.empty()) throw ConfigError("report needs at least one CSV file");
  std::vector<SweepTable> tables;
  for (const auto& p : csv_paths) {
    try {
      tables.push_back(read_csv(p));
    } catch (const CsvError& e) {
      throw std::runtime_error(p + ": " + e.what());
    }
  }
  return summarize(tables);
}

}  // namespace vpfp
