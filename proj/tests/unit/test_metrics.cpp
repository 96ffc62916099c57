#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "vpfp/errors.hpp"
#include "vpfp/metrics.hpp"
#include "vpfp/rng.hpp"

using namespace vpfp;

namespace {

DensityGrid two_cells(double a, double b) {
  const std::array<double, 1> lo{0.0}, hi{2.0};
  const std::array<std::size_t, 1> c{2};
  DensityGrid g(GridGeometry::from_box(lo, hi, c));
  g.mass = {a, b};
  return g;
}

double brute_force_w2(const std::vector<double>& a, const std::vector<double>& b, int dim) {
  const std::size_t n = a.size() / dim;
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double cost = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (int k = 0; k < dim; ++k) cost += std::pow(a[i * dim + k] - b[perm[i] * dim + k], 2);
    best = std::min(best, cost);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return std::sqrt(best / static_cast<double>(n));
}

std::vector<double> random_atoms(std::size_t n, int dim, std::uint64_t seed) {
  CounterRng rng({seed, StreamLabel::test, 1, 0});
  std::vector<double> out(n * dim);
  for (double& x : out) x = rng.normal();
  return out;
}

}  // namespace

TEST_SUITE("metrics") {
  TEST_CASE("coupling deviation: log factor on positions, velocities plain") {
    PhaseState a(2, 3), b(2, 3);
    a.x[0] = 3.0;
    a.x[1] = 4.0;
    b.v[5] = -2.0;
    const double n = std::exp(4.0);
    CHECK(coupling_deviation(a, b, n) == doctest::Approx(2.0 * 5.0 + 2.0));
    CHECK(coupling_deviation(a, a, n) == 0.0);
    PhaseState small(1, 3);
    CHECK_THROWS_AS(coupling_deviation(a, small, n), ConfigError);
  }

  TEST_CASE("two-cell KL, L1 and CKP slack") {
    const DensityGrid p = two_cells(0.5, 0.5);
    const DensityGrid q = two_cells(0.75, 0.25);
    CHECK(kl_divergence(p, q) == doctest::Approx(0.143841036225890).epsilon(1e-9));
    CHECK(l1_distance(p, q) == doctest::Approx(0.5));
    CHECK(ckp_slack(0.5, 0.143841036225890, 1) == doctest::Approx(0.037682072451780).epsilon(1e-9));
    CHECK(kl_divergence(p, p) == doctest::Approx(0.0).epsilon(1e-12));
    // a zero cell in q is finite through the pseudo-count
    CHECK(std::isfinite(kl_divergence(p, two_cells(1.0, 0.0))));
    CHECK_THROWS_AS(ckp_slack(0.1, 0.1, 0), ConfigError);
  }

  TEST_CASE("Pinsker holds on random grid pairs") {
    const std::array<double, 2> lo{0.0, 0.0}, hi{1.0, 1.0};
    const std::array<std::size_t, 2> c{8, 8};
    const GridGeometry geo = GridGeometry::from_box(lo, hi, c);
    for (std::uint64_t pair = 0; pair < 1000; ++pair) {
      CounterRng rng({pair, StreamLabel::test, 2, 0});
      DensityGrid p(geo), q(geo);
      const double sharp = 1.0 + 4.0 * rng.uniform();
      for (std::size_t k = 0; k < p.mass.size(); ++k) {
        p.mass[k] = std::pow(rng.uniform(), sharp);
        q.mass[k] = std::pow(rng.uniform(), sharp);
      }
      const double tp = p.total(), tq = q.total();
      for (double& m : p.mass) m /= tp;
      for (double& m : q.mass) m /= tq;
      const double l1 = l1_distance(p, q);
      CHECK(l1 * l1 <= 2.0 * kl_divergence(p, q) + 1e-12);
    }
  }

  TEST_CASE("exact W2 equals brute force over permutations") {
    for (std::size_t n = 1; n <= 6; ++n)
      for (int dim : {1, 2, 3}) {
        const auto a = random_atoms(n, dim, 10 * n + dim);
        const auto b = random_atoms(n, dim, 100 * n + dim);
        CHECK(wasserstein2_exact(a, b, dim) == doctest::Approx(brute_force_w2(a, b, dim)).epsilon(1e-12));
      }
  }

  TEST_CASE("exact W2 behaves as a metric") {
    const auto a = random_atoms(40, 3, 1);
    const auto b = random_atoms(40, 3, 2);
    const auto c = random_atoms(40, 3, 3);
    CHECK(wasserstein2_exact(a, a, 3) == 0.0);
    CHECK(wasserstein2_exact(a, b, 3) == doctest::Approx(wasserstein2_exact(b, a, 3)).epsilon(1e-12));
    CHECK(wasserstein2_exact(a, c, 3) <= wasserstein2_exact(a, b, 3) + wasserstein2_exact(b, c, 3) + 1e-12);
    // a rigid translation moves every atom by its length
    auto shifted = a;
    for (std::size_t i = 0; i < 40; ++i) shifted[i * 3 + 1] += 0.7;
    CHECK(wasserstein2_exact(a, shifted, 3) == doctest::Approx(0.7).epsilon(1e-12));
    const auto perm = optimal_assignment(a, shifted, 3);
    for (std::size_t i = 0; i < perm.size(); ++i) CHECK(perm[i] == i);
    CHECK_THROWS_AS(wasserstein2_exact(a, random_atoms(39, 3, 4), 3), ConfigError);
  }

  TEST_CASE("sliced W2: one-dimensional case is exact; unequal sizes are accepted") {
    const auto a = random_atoms(50, 1, 5);
    const auto b = random_atoms(50, 1, 6);
    const SlicedW2 s = wasserstein2_sliced(a, b, 1, 8, 0);
    CHECK(s.value == doctest::Approx(wasserstein2_exact(a, b, 1)).epsilon(1e-12));
    CHECK(s.corrected == s.value);
    // duplicating every atom leaves the measure unchanged
    auto doubled = a;
    doubled.insert(doubled.end(), a.begin(), a.end());
    CHECK(wasserstein2_sliced(a, doubled, 1, 4, 0).value == doctest::Approx(0.0).epsilon(1e-12));
  }

  TEST_CASE("exceedance counts strict excess") {
    std::vector<double> s(20, 0.1);
    s[3] = s[9] = s[17] = 0.5;
    CHECK(exceedance_probability(s, 0.2) == doctest::Approx(0.15));
    CHECK(exceedance_probability(s, 0.5) == 0.0);
    CHECK_THROWS_AS(exceedance_probability({}, 0.1), ConfigError);
  }

  TEST_CASE("rate fits") {
    std::vector<std::pair<double, double>> planted;
    for (double n : {256.0, 512.0, 1024.0, 2048.0, 4096.0}) planted.emplace_back(n, 3.0 * std::pow(n, -0.3));
    const RateFit f = fit_rate(planted);
    CHECK(f.slope == doctest::Approx(-0.3).epsilon(1e-12));
    CHECK(f.intercept == doctest::Approx(std::log(3.0)).epsilon(1e-12));
    CHECK(f.r2 == doctest::Approx(1.0));
    CHECK(f.slope_ci_low <= f.slope);
    CHECK(f.slope_ci_high >= f.slope);

    std::vector<std::pair<double, double>> flat;
    for (double n : {10.0, 20.0, 40.0}) flat.emplace_back(n, 2.0);
    CHECK(fit_rate(flat).slope == doctest::Approx(0.0).epsilon(1e-12));

    // N^{-0.4} sqrt(log N) over N = 2^8 .. 2^12 has local slope -0.4 + 1 / (2 log N)
    std::vector<std::pair<double, double>> drag;
    for (int k = 8; k <= 12; ++k) {
      const double n = std::ldexp(1.0, k);
      drag.emplace_back(n, std::pow(n, -0.4) * std::sqrt(std::log(n)));
    }
    const double slope = fit_rate(drag).slope;
    CHECK(slope > -0.5);
    CHECK(slope < -0.3);

    CHECK_THROWS_AS(fit_rate(std::span(planted).first(2)), ConfigError);
    planted[1].second = 0.0;
    CHECK_THROWS_AS(fit_rate(planted), DomainError);
  }

  TEST_CASE("quantile matches type-7 interpolation") {
    CHECK(quantile({4.0, 1.0, 3.0, 2.0}, 0.5) == doctest::Approx(2.5));
    CHECK(quantile({4.0, 1.0, 3.0, 2.0}, 0.25) == doctest::Approx(1.75));
    CHECK(quantile({7.0}, 0.9) == 7.0);
  }

  TEST_CASE("law-of-large-numbers statistic on degenerate inputs") {
    const std::array<double, 3> lo{-1.0, -1.0, -1.0}, hi{1.0, 1.0, 1.0};
    const std::array<std::size_t, 3> c{4, 4, 4};
    DensityGrid point(GridGeometry::from_box(lo, hi, c));
    point.mass[21] = 1.0;
    const KernelSpec spec = KernelSpec::make(3, KernelFamily::lp, 0.2, 64);
    // every sample sits on the single atom, where both fields vanish
    const LlnResult r = lln_fluctuation(point, spec, 2, 64, 3, 1);
    CHECK(r.statistic == 0.0);
    CHECK(r.sup_per_rep.size() == 3);
    CHECK_THROWS_AS(lln_fluctuation(point, spec, 0, 64, 3, 1), ConfigError);
    point.mass[21] = 0.5;
    CHECK_THROWS_AS(lln_fluctuation(point, spec, 2, 64, 3, 1), ConfigError);
  }
}
