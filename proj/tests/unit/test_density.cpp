#include <doctest.h>

#include <cmath>
#include <numeric>

#include "vpfp/density.hpp"
#include "vpfp/errors.hpp"
#include "vpfp/initial_data.hpp"
#include "vpfp/metrics.hpp"
#include "vpfp/rng.hpp"

using namespace vpfp;

namespace {

GridGeometry box2(std::size_t cells) {
  const std::array<double, 2> lo{0.0, 0.0}, hi{1.0, 1.0};
  const std::array<std::size_t, 2> c{cells, cells};
  return GridGeometry::from_box(lo, hi, c);
}

}  // namespace

TEST_SUITE("density") {
  TEST_CASE("histogram of a single interior point") {
    const std::vector<double> p{0.31, 0.77};
    const DensityGrid g = histogram(p, box2(4));
    CHECK(g.total() == 1.0);
    CHECK(std::count(g.mass.begin(), g.mass.end(), 1.0) == 1);
    CHECK(g.mass[1 * 4 + 3] == 1.0);
  }

  TEST_CASE("uniform points fill cells within binomial noise") {
    CounterRng rng({1, StreamLabel::test, 0, 0});
    const std::size_t m = 1000000;
    std::vector<double> p(2 * m);
    for (double& x : p) x = rng.uniform();
    const DensityGrid g = histogram(p, box2(10));
    const double q = 0.01;
    const double sd = std::sqrt(q * (1.0 - q) / static_cast<double>(m));
    for (double c : g.mass) CHECK(std::abs(c - q) < 5.0 * sd);
  }

  TEST_CASE("histogram mass plus clipped mass is one") {
    const std::vector<double> p{0.5, 0.5, 1.5, 0.5, 0.2, -0.1, 0.9, 0.9};
    const DensityGrid g = histogram(p, box2(3));
    CHECK(g.total() + g.clipped_mass == 1.0);
    CHECK(g.clipped_mass == 0.5);
    const std::vector<double> out{2.0, 2.0};
    CHECK_THROWS_AS(histogram(out, box2(3)), DomainError);
    CHECK_THROWS_AS(histogram(p, box2(1)), ConfigError);
  }

  TEST_CASE("kde_smooth: identity, impulse response, shift equivariance") {
    DensityGrid g(box2(21));
    g.mass[10 * 21 + 10] = 1.0;
    const DensityGrid same = kde_smooth(g, 0.0);
    CHECK(same.mass == g.mass);

    const DensityGrid s = kde_smooth(g, 2.0);
    CHECK(s.total() == doctest::Approx(1.0).epsilon(1e-12));
    // separable normalized Gaussian stencil of radius 6
    std::vector<double> w(13);
    for (int k = -6; k <= 6; ++k) w[k + 6] = std::exp(-0.5 * k * k / 4.0);
    const double wsum = std::accumulate(w.begin(), w.end(), 0.0);
    for (int i = -6; i <= 6; ++i)
      for (int j = -6; j <= 6; ++j) {
        const double v = s.mass[(10 + i) * 21 + (10 + j)];
        CHECK(v == doctest::Approx(w[i + 6] * w[j + 6] / (wsum * wsum)).epsilon(1e-12));
        CHECK(v == doctest::Approx(s.mass[(10 - i) * 21 + (10 - j)]).epsilon(1e-14));
      }
    CHECK(s.mass[(10 + 7) * 21 + 10] == 0.0);

    DensityGrid a(box2(21)), b(box2(21));
    a.mass[8 * 21 + 9] = 0.6;
    a.mass[9 * 21 + 9] = 0.4;
    b.mass[10 * 21 + 12] = 0.6;
    b.mass[11 * 21 + 12] = 0.4;
    const DensityGrid sa = kde_smooth(a, 1.5), sb = kde_smooth(b, 1.5);
    for (int i = 4; i < 14; ++i)
      for (int j = 4; j < 14; ++j) CHECK(sa.mass[i * 21 + j] == doctest::Approx(sb.mass[(i + 2) * 21 + j + 3]).epsilon(1e-13));
  }

  TEST_CASE("marginals: identity, product factor, conservation") {
    const std::array<double, 2> lo{0.0, 0.0}, hi{1.0, 2.0};
    const std::array<std::size_t, 2> c{3, 4};
    DensityGrid g(GridGeometry::from_box(lo, hi, c));
    const double p[3] = {0.2, 0.3, 0.5};
    const double q[4] = {0.1, 0.2, 0.3, 0.4};
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 4; ++j) g.mass[i * 4 + j] = p[i] * q[j];
    const std::array<int, 2> all{0, 1};
    CHECK(marginal(g, all).mass == g.mass);
    const std::array<int, 1> first{0};
    const DensityGrid m = marginal(g, first);
    REQUIRE(m.mass.size() == 3);
    for (int i = 0; i < 3; ++i) CHECK(m.mass[i] == doctest::Approx(p[i]).epsilon(1e-15));
    CHECK(m.total() == doctest::Approx(g.total()).epsilon(1e-12));
    const std::array<int, 2> bad{1, 0};
    CHECK_THROWS_AS(marginal(g, bad), ConfigError);
  }

  TEST_CASE("histogram, smoothing and marginal pipeline conserves mass") {
    const PhaseState s = sample_initial(InitialDensitySpec{}, 5000, 4);
    const std::vector<double> pts = phase_points(s);
    auto [lo, hi] = bounding_box(pts, 6, 0.01);
    const std::vector<std::size_t> cells(6, 8);
    const DensityGrid g = kde_smooth(histogram(pts, GridGeometry::from_box(lo, hi, cells)), 1.0);
    const std::array<int, 3> pos{0, 1, 2};
    CHECK(marginal(g, pos).total() == doctest::Approx(1.0).epsilon(1e-10));
  }

  TEST_CASE("histogram KL against the exact grid shrinks with the sample size") {
    InitialDensitySpec spec;
    spec.kind = InitialKind::polynomial_decay;
    spec.dim = 1;
    const std::array<double, 2> lo{-4.0, -4.0}, hi{4.0, 4.0};
    const std::array<std::size_t, 2> c{16, 16};
    const GridGeometry g = GridGeometry::from_box(lo, hi, c);
    const DensityGrid exact = grid_from_density(
        g, [&](std::span<const double> p) { return density_eval(spec, {p[0], 0.0, 0.0}, {p[1], 0.0, 0.0}); });
    double prev = INFINITY;
    for (std::size_t m : {1000, 10000, 100000}) {
      const PhaseState s = sample_initial(spec, m, 2);
      DensityGrid h = histogram(phase_points(s), g);
      h.clipped_mass = 0.0;
      const double kl = kl_divergence(h, exact);
      CHECK(kl < prev);
      prev = kl;
    }
    CHECK(prev < 0.01);
  }

  TEST_CASE("cubic geometry covers the box with padding and a quantized edge") {
    const std::array<double, 3> lo{-1.0, -2.0, 0.0}, hi{1.0, 1.0, 0.5};
    const GridGeometry g = cubic_geometry(lo, hi, 32, 4, true);
    CHECK(g.edge[0] == g.edge[1]);
    CHECK(g.edge[1] == g.edge[2]);
    CHECK(g.edge[0] >= 3.0 / 24.0);
    const double k = 16.0 * std::log2(g.edge[0]);
    CHECK(k == doctest::Approx(std::round(k)).epsilon(1e-9));
    for (int a = 0; a < 3; ++a) {
      CHECK(g.lower[a] + 4 * g.edge[a] <= lo[a] + 1e-12);
      CHECK(g.upper(a) - 4 * g.edge[a] >= hi[a] - 1e-12);
    }
  }
}
