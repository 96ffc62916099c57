// Python bindings: configs, coupled runs, kernels, metrics and snapshots on numpy arrays.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <algorithm>
#include <string>
#include <vector>

#include "vpfp/config.hpp"
#include "vpfp/dynamics.hpp"
#include "vpfp/kernels.hpp"
#include "vpfp/metrics.hpp"
#include "vpfp/snapshot.hpp"
#include "vpfp/sweep.hpp"
#include "vpfp/vp1d.hpp"

namespace py = pybind11;
using namespace vpfp;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

std::vector<double> flat(const Array& a) { return {a.data(), a.data() + a.size()}; }

Array to_array(const std::vector<double>& v, std::vector<py::ssize_t> shape) {
  Array out(shape);
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

int columns(const Array& a) {
  if (a.ndim() == 1) return 1;
  if (a.ndim() != 2) throw py::value_error("expected an (n, d) array");
  return static_cast<int>(a.shape(1));
}

py::dict state_dict(const PhaseState& s) {
  py::dict d;
  const auto n = static_cast<py::ssize_t>(s.n);
  d["t"] = s.t;
  d["x"] = to_array(s.x, {n, s.dim});
  d["v"] = to_array(s.v, {n, s.dim});
  return d;
}

DensityGrid flat_grid(const Array& a) {
  const std::array<double, 1> lo{0.0}, hi{1.0};
  const std::array<std::size_t, 1> cells{static_cast<std::size_t>(a.size())};
  DensityGrid g(GridGeometry::from_box(lo, hi, cells));
  g.mass = flat(a);
  return g;
}

py::dict run_coupled_py(const std::string& config_json, std::size_t n_index, std::size_t sigma_index,
                        std::size_t seed_index) {
  const ExperimentConfig c = parse_config(config_json);
  if (n_index >= c.n.size() || sigma_index >= c.sigma.size() || seed_index >= c.seeds.size())
    throw py::index_error("cell index out of range");
  CoupledConfig cc;
  cc.n = c.n[n_index];
  cc.kernel = c.kernel_spec(cc.n);
  cc.initial = c.initial;
  cc.sde.sigma = c.sigma[sigma_index];
  cc.sde.t_end = c.t_end;
  cc.sde.seed = c.seeds[seed_index];
  cc.sde.force_path = c.force_path;
  cc.sde.dt = c.dt ? *c.dt : default_time_step(Kernel(cc.kernel));
  cc.mean_field_copies = std::max(c.mean_field_copies, cc.n);
  cc.refresh_every = c.refresh_every;
  cc.mean_field = c.mean_field;
  cc.output_times = c.output_times;
  CoupledRun run;
  {
    py::gil_scoped_release release;
    run = run_coupled(cc);
  }
  std::vector<double> t, dev;
  for (const auto& r : run.deviations) {
    t.push_back(r.t);
    dev.push_back(r.deviation);
  }
  py::dict out;
  out["n"] = run.n;
  out["dt"] = run.dt;
  out["t"] = to_array(t, {static_cast<py::ssize_t>(t.size())});
  out["deviation"] = to_array(dev, {static_cast<py::ssize_t>(dev.size())});
  out["sup_deviation"] = run.sup_deviation();
  out["output_times"] = run.output_times;
  py::list phi, psi;
  for (const auto& s : run.phi) phi.append(state_dict(s));
  for (const auto& s : run.psi) psi.append(state_dict(s));
  out["phi"] = phi;
  out["psi"] = psi;
  out["clipped_flag"] = run.clipped_flag;
  return out;
}

Array kernel_py(const Array& x, const std::string& family, double delta, std::int64_t n, int sign) {
  const int d = columns(x);
  const Kernel k(KernelSpec::make(d, parse_kernel_family(family), delta, n, sign));
  const std::vector<double> pts = flat(x);
  std::vector<double> out(pts.size());
  for (std::size_t i = 0; i * d < pts.size(); ++i) {
    Vec p{0.0, 0.0, 0.0};
    for (int a = 0; a < d; ++a) p[a] = pts[i * d + a];
    const Vec v = k(p);
    for (int a = 0; a < d; ++a) out[i * d + a] = v[a];
  }
  std::vector<py::ssize_t> shape(x.shape(), x.shape() + x.ndim());
  return to_array(out, shape);
}

py::object read_snapshot_py(const std::string& path) {
  const Snapshot s = read_snapshot(path);
  if (const auto* p = std::get_if<PhaseState>(&s)) return state_dict(*p);
  if (const auto* g = std::get_if<DensityGrid>(&s)) {
    std::vector<py::ssize_t> shape;
    std::vector<double> lo, hi;
    for (int a = 0; a < g->geometry.axes; ++a) {
      shape.push_back(static_cast<py::ssize_t>(g->geometry.cells[a]));
      lo.push_back(g->geometry.lower[a]);
      hi.push_back(g->geometry.upper(a));
    }
    py::dict d;
    d["mass"] = to_array(g->mass, shape);
    d["lower"] = lo;
    d["upper"] = hi;
    d["clipped_mass"] = g->clipped_mass;
    return d;
  }
  const auto& k = std::get<KineticGrid1D>(s);
  py::dict d;
  d["t"] = k.t;
  d["f"] = to_array(k.f, {static_cast<py::ssize_t>(k.nx), static_cast<py::ssize_t>(k.nv)});
  d["x_range"] = std::make_pair(k.x_lo, k.x_hi);
  d["v_range"] = std::make_pair(k.v_lo, k.v_hi);
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Coulomb particle system and mean-field coupling laboratory";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);
  py::register_exception<SnapshotError>(m, "SnapshotError", PyExc_IOError);

  m.def(
      "normalize_config", [](const std::string& text) { return to_json(parse_config(text)); }, py::arg("config_json"),
      "Validate a JSON config and return its canonical form.");
  m.def(
      "config_violations",
      [](const std::string& text) {
        try {
          parse_config(text);
        } catch (const ConfigViolations& e) {
          return e.violations();
        }
        return std::vector<std::string>{};
      },
      py::arg("config_json"));
  m.def("run_coupled", &run_coupled_py, py::arg("config_json"), py::arg("n_index") = 0, py::arg("sigma_index") = 0,
        py::arg("seed_index") = 0, "One coupled run for a cell of the config.");
  m.def(
      "run_sweep",
      [](const std::string& text) {
        const ExperimentConfig c = parse_config(text);
        {
          py::gil_scoped_release release;
          run_sweep(c);
        }
        return c.out;
      },
      py::arg("config_json"), "Run every cell; returns the output directory.");
  m.def(
      "report", [](const std::vector<std::string>& paths) { return report(paths); }, py::arg("csv_paths"));

  m.def("kernel", &kernel_py, py::arg("x"), py::arg("family") = "lp", py::arg("delta") = 0.25, py::arg("n") = 256,
        py::arg("sign") = 1, "Evaluate a kernel family at each row of x.");
  m.def("unit_sphere_area", &unit_sphere_area);

  m.def(
      "sample_initial",
      [](const std::string& kind, int dim, std::size_t n, std::uint64_t seed) {
        InitialDensitySpec spec;
        spec.kind = parse_initial_kind(kind);
        spec.dim = dim;
        return state_dict(sample_initial(spec, n, seed));
      },
      py::arg("kind") = "gauss_x_truncgauss_v", py::arg("dim") = 3, py::arg("n") = 256, py::arg("seed") = 0);

  m.def(
      "wasserstein2",
      [](const Array& a, const Array& b) {
        if (columns(a) != columns(b)) throw py::value_error("dimension mismatch");
        return wasserstein2_exact(flat(a), flat(b), columns(a));
      },
      py::arg("a"), py::arg("b"));
  m.def(
      "wasserstein2_sliced",
      [](const Array& a, const Array& b, std::size_t projections, std::uint64_t seed) {
        if (columns(a) != columns(b)) throw py::value_error("dimension mismatch");
        const SlicedW2 s = wasserstein2_sliced(flat(a), flat(b), columns(a), projections, seed);
        return py::make_tuple(s.value, s.std_error, s.corrected);
      },
      py::arg("a"), py::arg("b"), py::arg("projections") = 256, py::arg("seed") = 0,
      "Returns (value, std_error, corrected).");
  m.def(
      "kl_divergence", [](const Array& p, const Array& q) { return kl_divergence(flat_grid(p), flat_grid(q)); },
      py::arg("p"), py::arg("q"));
  m.def(
      "l1_distance", [](const Array& p, const Array& q) { return l1_distance(flat_grid(p), flat_grid(q)); },
      py::arg("p"), py::arg("q"));
  m.def(
      "fit_rate",
      [](const std::vector<double>& n, const std::vector<double>& values) {
        if (n.size() != values.size()) throw py::value_error("n and values differ in length");
        std::vector<std::pair<double, double>> pts;
        for (std::size_t i = 0; i < n.size(); ++i) pts.emplace_back(n[i], values[i]);
        const RateFit f = fit_rate(pts);
        py::dict d;
        d["slope"] = f.slope;
        d["intercept"] = f.intercept;
        d["r2"] = f.r2;
        d["slope_ci"] = std::make_pair(f.slope_ci_low, f.slope_ci_high);
        return d;
      },
      py::arg("n"), py::arg("values"));

  m.def(
      "solve_vp1d",
      [](const Array& f0, std::pair<double, double> x_range, std::pair<double, double> v_range, double t_end,
         double sigma, double dt) {
        if (f0.ndim() != 2) throw py::value_error("f0 must be a 2-D array");
        KineticGrid1D g;
        g.x_lo = x_range.first;
        g.x_hi = x_range.second;
        g.v_lo = v_range.first;
        g.v_hi = v_range.second;
        g.nx = static_cast<std::size_t>(f0.shape(0));
        g.nv = static_cast<std::size_t>(f0.shape(1));
        g.f = flat(f0);
        Vp1dOptions o;
        o.sigma = sigma;
        o.c1 = 1.0 / unit_sphere_area(1);
        const double step = dt > 0.0 ? dt : 0.9 * cfl_limit(g, o);
        KineticGrid1D out;
        {
          py::gil_scoped_release release;
          out = solve_vp1d(std::move(g), step, t_end, o);
        }
        return to_array(out.f, {static_cast<py::ssize_t>(out.nx), static_cast<py::ssize_t>(out.nv)});
      },
      py::arg("f0"), py::arg("x_range") = std::make_pair(-6.0, 6.0), py::arg("v_range") = std::make_pair(-6.0, 6.0),
      py::arg("t_end") = 1.0, py::arg("sigma") = 0.0, py::arg("dt") = 0.0,
      "Strang-split kinetic solve; dt <= 0 picks 0.9 of the CFL limit.");

  m.def("read_snapshot", &read_snapshot_py, py::arg("path"));
}
