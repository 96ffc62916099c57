#include <doctest.h>

#include <omp.h>

#include <cmath>
#include <numbers>

#include "vpfp/dynamics.hpp"
#include "vpfp/errors.hpp"
#include "vpfp/metrics.hpp"
#include "vpfp/rng.hpp"

using namespace vpfp;

namespace {

PhaseState random_state(std::size_t n, int d, std::uint64_t seed, double spread) {
  PhaseState s(n, d);
  CounterRng rng({seed, StreamLabel::test, 0, 0});
  for (double& x : s.x) x = spread * rng.normal();
  for (double& v : s.v) v = rng.normal();
  return s;
}

DensityGrid uniform_1d(std::size_t cells) {
  const std::array<double, 1> lo{-1.0}, hi{1.0};
  const std::array<std::size_t, 1> c{cells};
  DensityGrid g(GridGeometry::from_box(lo, hi, c));
  for (double& m : g.mass) m = 1.0 / static_cast<double>(cells);
  return g;
}

}  // namespace

TEST_SUITE("dynamics") {
  TEST_CASE("step count and final partial step") {
    SdeParams p;
    p.t_end = 1.0;
    p.dt = 0.3;
    CHECK(p.steps() == 4);
    CHECK(p.step_length(3) == doctest::Approx(0.1));
    p.dt = 0.1;
    CHECK(p.steps() == 10);
    p.dt = 2.0;
    CHECK_THROWS_AS(p.validate(), ConfigError);
  }

  TEST_CASE("default time step follows the kernel bound") {
    const Kernel k(KernelSpec::make(3, KernelFamily::lp, 0.25, 4096));
    CHECK(default_time_step(k) == doctest::Approx(std::min(1e-2, 0.1 / (std::pow(4096.0, 0.5) / (4.0 * std::numbers::pi)))));
    const Kernel small(KernelSpec::make(3, KernelFamily::lp, 0.1, 4));
    CHECK(default_time_step(small) == 1e-2);
  }

  TEST_CASE("brownian increments: determinism, variance, independence across steps") {
    CHECK(brownian_increment(4, 10, 3, 3, 0.01) == brownian_increment(4, 10, 3, 3, 0.01));
    const double dt = 0.01;
    const std::size_t n = 1000000;
    double s2 = 0.0, cross = 0.0, a2 = 0.0, b2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double a = brownian_increment(1, i, 5, 1, dt)[0];
      const double b = brownian_increment(1, i, 6, 1, dt)[0];
      s2 += a * a;
      cross += a * b;
      a2 += a * a;
      b2 += b * b;
    }
    CHECK(s2 / n == doctest::Approx(dt).epsilon(0.01));
    CHECK(std::abs(cross / std::sqrt(a2 * b2)) < 0.01);
  }

  TEST_CASE("noise sources agree on checksums when they draw the same keys") {
    NoiseSource a(3, 2), b(3, 2), c(3, 2);
    std::vector<double> buf(20);
    a.draw(0, 0, 10, 0.1, buf);
    b.draw(0, 0, 10, 0.1, buf);
    c.draw(1, 0, 10, 0.1, buf);
    CHECK(a.checksum() == b.checksum());
    CHECK(a.checksum() != c.checksum());
    CHECK(a.draws() == 10);
  }

  TEST_CASE("two-body forces are antisymmetric and equal the kernel") {
    const Kernel k(KernelSpec::make(3, KernelFamily::lp, 0.3, 2));
    PhaseState s(2, 3);
    const Vec x{0.8, -0.4, 0.3};
    for (int a = 0; a < 3; ++a) {
      s.x[a] = 0.5 * x[a];
      s.x[3 + a] = -0.5 * x[a];
    }
    const auto f = pairwise_force(s, k);
    const Vec kx = k(x);
    for (int a = 0; a < 3; ++a) {
      CHECK(f[a] == doctest::Approx(kx[a]).epsilon(1e-15));
      CHECK(f[3 + a] == -f[a]);
    }
  }

  TEST_CASE("coincident particles feel no force") {
    for (auto fam : {KernelFamily::lp, KernelFamily::hlp}) {
      const Kernel k(KernelSpec::make(3, fam, 0.3, 10));
      PhaseState s(10, 3);
      for (double& x : s.x) x = 0.25;
      for (auto path : {ForcePath::direct, ForcePath::cell_list})
        for (double f : pairwise_force(s, k, path)) CHECK(f == 0.0);
    }
  }

  TEST_CASE("unit tetrahedron matches a hand sum of Coulomb forces") {
    const Kernel k(KernelSpec::make(3, KernelFamily::lp, 0.5, 4));
    REQUIRE(k.cutoff() < 1.0);
    const double verts[4][3] = {{0.0, 0.0, 0.0},
                                {1.0, 0.0, 0.0},
                                {0.5, std::sqrt(3.0) / 2.0, 0.0},
                                {0.5, std::sqrt(3.0) / 6.0, std::sqrt(2.0 / 3.0)}};
    PhaseState s(4, 3);
    for (int i = 0; i < 4; ++i)
      for (int a = 0; a < 3; ++a) s.x[i * 3 + a] = verts[i][a];
    const auto f = pairwise_force(s, k);
    const double c = 1.0 / (4.0 * std::numbers::pi);
    for (int i = 0; i < 4; ++i) {
      for (int a = 0; a < 3; ++a) {
        double hand = 0.0;
        for (int j = 0; j < 4; ++j) {
          if (j == i) continue;
          double r2 = 0.0;
          for (int b = 0; b < 3; ++b) r2 += (verts[i][b] - verts[j][b]) * (verts[i][b] - verts[j][b]);
          hand += c * (verts[i][a] - verts[j][a]) / std::pow(r2, 1.5);
        }
        CHECK(f[i * 3 + a] == doctest::Approx(hand / 3.0).epsilon(1e-13));
      }
    }
  }

  TEST_CASE("cell list agrees with direct summation to 1e-12") {
    struct Case {
      int d;
      KernelFamily fam;
      double spread;
    };
    for (const Case& c : {Case{1, KernelFamily::lp, 1.0}, Case{2, KernelFamily::lp, 1.0}, Case{3, KernelFamily::lp, 1.0},
                          Case{3, KernelFamily::hlp, 1.0}, Case{3, KernelFamily::lp, 0.05}}) {
      const std::size_t n = 600;
      const Kernel k(KernelSpec::make(c.d, c.fam, 0.3, static_cast<std::int64_t>(n)));
      const PhaseState s = random_state(n, c.d, 7, c.spread);
      const auto a = pairwise_force(s, k, ForcePath::direct);
      const auto b = pairwise_force(s, k, ForcePath::cell_list);
      for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) <= 1e-12);
    }
    CHECK_THROWS_AS(parse_force_path("tree"), ConfigError);
  }

  TEST_CASE("momentum is conserved without noise") {
    CoupledConfig c;
    c.n = 128;
    c.kernel = KernelSpec::make(3, KernelFamily::lp, 0.25, 128);
    c.initial.dim = 3;
    c.sde.sigma = 0.0;
    c.sde.seed = 2;
    c.sde.t_end = 0.5;
    const auto states = run_particles(c);
    const PhaseState& a = states.front();
    const PhaseState& b = states.back();
    for (int k = 0; k < 3; ++k) {
      double pa = 0.0, pb = 0.0;
      for (std::size_t i = 0; i < a.n; ++i) {
        pa += a.v[i * 3 + k];
        pb += b.v[i * 3 + k];
      }
      CHECK(std::abs(pa - pb) <= 1e-10 * static_cast<double>(a.n));
    }
  }

  TEST_CASE("mean-field quadrature: odd symmetry, uniform 1-D oracle, single cell") {
    const Kernel exact1(KernelSpec::make(1, KernelFamily::exact, 0.3, 10));
    const DensityGrid u = uniform_1d(200);
    // cell faces at -1 + k / 100, where the midpoint rule for sign(x - y) is exact
    const std::vector<double> q{0.3, -0.57, 0.0};
    const auto f = meanfield_force(q, u, exact1);
    for (std::size_t i = 0; i < q.size(); ++i) CHECK(f[i] == doctest::Approx(q[i] / 2.0).epsilon(1e-12));
    const std::vector<double> mid{0.3051};
    CHECK(meanfield_force(mid, u, exact1)[0] == doctest::Approx(0.3051 / 2.0).epsilon(0.02));

    const Kernel lp3(KernelSpec::make(3, KernelFamily::lp, 0.3, 100));
    const std::array<double, 3> lo{-1.0, -1.0, -1.0}, hi{1.0, 1.0, 1.0};
    const std::array<std::size_t, 3> c{9, 9, 9};
    DensityGrid g(GridGeometry::from_box(lo, hi, c));
    g.mass[4 * 81 + 4 * 9 + 4] = 1.0;
    const std::vector<double> origin{0.0, 0.0, 0.0};
    for (double v : meanfield_force(origin, g, lp3)) CHECK(v == 0.0);
    const std::vector<double> far{1.5, 0.2, -0.7};
    const auto ff = meanfield_force(far, g, lp3);
    const Vec expect = coulomb_kernel({1.5, 0.2, -0.7}, lp3.spec());
    for (int a = 0; a < 3; ++a) CHECK(ff[a] == doctest::Approx(expect[a]).epsilon(1e-14));
    const std::vector<double> outside{2.5, 0.0, 0.0};
    CHECK_THROWS_AS(meanfield_force(outside, g, lp3), DomainError);
  }

  TEST_CASE("FFT mean field equals direct quadrature at cell centers") {
    MeanFieldOptions opts;
    opts.cells = 16;
    opts.bandwidth_cells = 1.0;
    const Kernel k(KernelSpec::make(3, KernelFamily::lp, 0.25, 256));
    MeanFieldSolver solver(k, opts);
    const PhaseState s = random_state(500, 3, 3, 1.0);
    solver.refresh(s.x);
    const DensityGrid& rho = solver.density();
    std::vector<double> centers;
    const GridGeometry& g = rho.geometry;
    for (std::size_t i = 0; i < 16; i += 3)
      for (std::size_t j = 0; j < 16; j += 5)
        for (std::size_t l = 0; l < 16; l += 2) {
          centers.push_back(g.center(0, i));
          centers.push_back(g.center(1, j));
          centers.push_back(g.center(2, l));
        }
    const auto direct = meanfield_force(centers, rho, k);
    double scale = 0.0;
    for (double v : direct) scale = std::max(scale, std::abs(v));
    std::size_t q = 0;
    for (std::size_t i = 0; i < 16; i += 3)
      for (std::size_t j = 0; j < 16; j += 5)
        for (std::size_t l = 0; l < 16; l += 2, ++q)
          for (int a = 0; a < 3; ++a) {
            const double fft = solver.cell_field(a)[i * 256 + j * 16 + l];
            CHECK(std::abs(fft - direct[q * 3 + a]) <= 1e-10 * scale);
          }
    // the evaluated field at a center is the cell value
    const auto at = solver.evaluate(std::span<const double>(centers).first(3));
    for (int a = 0; a < 3; ++a) CHECK(at[a] == doctest::Approx(direct[a]).epsilon(1e-9));
    CHECK(solver.transforms_computed() == 1);
    solver.refresh(s.x);
    CHECK(solver.transforms_computed() == 1);
  }

  TEST_CASE("Euler-Maruyama: free streaming, constant force, variance") {
    SdeParams p;
    p.dt = 0.125;
    p.t_end = 1.0;
    PhaseState s(1, 3);
    s.x = {1.0, 2.0, 3.0};
    s.v = {0.5, -1.0, 2.0};
    const std::vector<double> zero(3, 0.0);
    const PhaseState a = em_step(s, zero, p, zero, 0);
    for (int k = 0; k < 3; ++k) {
      CHECK(a.x[k] == s.x[k] + s.v[k] * 0.125);
      CHECK(a.v[k] == s.v[k]);
    }
    const std::vector<double> force{2.0, -4.0, 0.5};
    PhaseState c = s;
    for (std::size_t step = 0; step < 8; ++step) c = em_step(c, force, p, zero, step);
    for (int k = 0; k < 3; ++k) CHECK(c.v[k] == s.v[k] + 8 * 0.125 * force[k]);

    SdeParams noisy;
    noisy.sigma = 0.5;
    noisy.dt = 0.01;
    noisy.t_end = 0.01;
    const std::size_t n = 100000;
    PhaseState ens(n, 1);
    std::vector<double> inc(n), f(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) inc[i] = brownian_increment(9, i, 0, 1, noisy.dt)[0];
    const PhaseState out = em_step(ens, f, noisy, inc, 0);
    double var = 0.0;
    for (double v : out.v) var += v * v;
    CHECK(var / n == doctest::Approx(2.0 * 0.5 * 0.01).epsilon(0.02));

    std::vector<double> bad(3, 0.0);
    bad[1] = std::numeric_limits<double>::infinity();
    try {
      em_step(s, bad, p, zero, 4);
      FAIL("expected blow-up");
    } catch (const BlowUpError& e) {
      CHECK(e.step() == 4);
      CHECK(e.particle() == 0);
    }
  }

  TEST_CASE("identical dynamics give zero deviation; noise checksums match") {
    CoupledConfig c;
    c.n = 64;
    c.kernel = KernelSpec::make(3, KernelFamily::lp, 0.25, 64);
    c.initial.dim = 3;
    c.sde.sigma = 0.5;
    c.sde.dt = 0.05;
    c.sde.t_end = 0.5;
    c.sde.seed = 3;
    c.mean_field.cells = 16;
    c.identical_dynamics = true;
    const CoupledRun r = run_coupled(c);
    CHECK(r.sup_deviation() == 0.0);
    CHECK(r.deviations.size() == 11);
    CHECK(r.phi_noise_checksum == r.psi_noise_checksum);
    CHECK(r.output_times == std::vector<double>{0.0, 0.15000000000000002, 0.25, 0.4, 0.5});
  }

  TEST_CASE("two-body run completes with a finite deviation") {
    CoupledConfig c;
    c.n = 2;
    c.kernel = KernelSpec::make(3, KernelFamily::lp, 0.1, 2);
    c.initial.dim = 3;
    c.sde.sigma = 0.0;
    c.sde.dt = 0.01;
    c.sde.t_end = 0.2;
    c.mean_field.cells = 16;
    const CoupledRun r = run_coupled(c);
    CHECK(std::isfinite(r.sup_deviation()));
    CHECK(r.phi.size() == 5);
  }

  TEST_CASE("refreshing the mean field every 4 steps stays within a grid cell of every step") {
    CoupledConfig c;
    c.n = 256;
    c.kernel = KernelSpec::make(3, KernelFamily::lp, 0.25, 256);
    c.initial.dim = 3;
    c.sde.sigma = 0.5;
    c.sde.dt = 0.01;
    c.sde.t_end = 0.5;
    c.sde.seed = 21;
    c.mean_field.cells = 16;
    c.mean_field_copies = 1024;
    const CoupledRun every = run_coupled(c);
    c.refresh_every = 4;
    const CoupledRun sparse = run_coupled(c);
    // cell edge of the pilot grid: box of the ensemble (about 8 wide) over 16 cells
    const double edge = 2.0 * every.box_halfwidth.back() / 16.0;
    CHECK(std::abs(every.sup_deviation() - sparse.sup_deviation()) < edge);
    CHECK(every.sup_deviation() != sparse.sup_deviation());
  }

  TEST_CASE("coupled runs are bit-identical across thread counts") {
    CoupledConfig c;
    c.n = 300;
    c.kernel = KernelSpec::make(3, KernelFamily::lp, 0.25, 300);
    c.initial.dim = 3;
    c.sde.sigma = 0.5;
    c.sde.dt = 0.05;
    c.sde.t_end = 0.3;
    c.sde.seed = 12;
    c.sde.force_path = ForcePath::cell_list;
    c.mean_field.cells = 16;
    c.mean_field_copies = 600;
    const int saved = omp_get_max_threads();
    omp_set_num_threads(1);
    const CoupledRun a = run_coupled(c);
    omp_set_num_threads(4);
    const CoupledRun b = run_coupled(c);
    omp_set_num_threads(saved);
    REQUIRE(a.deviations.size() == b.deviations.size());
    for (std::size_t i = 0; i < a.deviations.size(); ++i) CHECK(a.deviations[i].deviation == b.deviations[i].deviation);
    CHECK(a.phi.back() == b.phi.back());
    CHECK(a.psi.back() == b.psi.back());
  }

  TEST_CASE("characteristics in a frozen linear field") {
    const FieldFunction half = [](const PhaseState& s, double, std::span<double> a) {
      for (std::size_t i = 0; i < s.n; ++i) a[i] = 0.5 * s.x[i];
    };
    PhaseState center(1, 1);
    const auto fixed = characteristics_vp(center, half, 0.01, 1.0);
    CHECK(fixed.back().x[0] == 0.0);
    CHECK(fixed.back().v[0] == 0.0);

    PhaseState s(1, 1);
    s.x[0] = 0.4;
    s.v[0] = -0.2;
    const double r = 1.0 / std::sqrt(2.0);
    const double exact = 0.4 * std::cosh(r) + (-0.2) * std::sqrt(2.0) * std::sinh(r);
    const double e1 = std::abs(characteristics_vp(s, half, 2e-3, 1.0).back().x[0] - exact);
    const double e2 = std::abs(characteristics_vp(s, half, 1e-3, 1.0).back().x[0] - exact);
    CHECK(e1 < 2e-3);
    CHECK(e1 / e2 == doctest::Approx(2.0).epsilon(0.05));
  }
}
