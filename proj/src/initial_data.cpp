#include "vpfp/initial_data.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "vpfp/errors.hpp"
#include "vpfp/kernels.hpp"
#include "vpfp/rng.hpp"

namespace vpfp {

namespace {

double gaussian_norm(int dim, double scale) { return std::pow(2.0 * std::numbers::pi * scale * scale, -0.5 * dim); }

// normalization of (1 + |y/s|^2)^{-a} over R^d: s^d |S^{d-1}| B(d/2, a - d/2) / 2
double polynomial_norm(int dim, double scale, double exponent) {
  return 1.0 / (std::pow(scale, dim) * unit_sphere_area(dim) * 0.5 * std::beta(0.5 * dim, exponent - 0.5 * dim));
}

Vec random_direction(CounterRng& rng, int dim) {
  Vec u{0.0, 0.0, 0.0};
  double n2 = 0.0;
  do {
    for (int k = 0; k < dim; ++k) u[k] = rng.normal();
    n2 = norm2(u, dim);
  } while (n2 == 0.0);
  return scaled(u, 1.0 / std::sqrt(n2));
}

// |Y| for Y with density proportional to (1 + |y/s|^2)^{-a}: |Y|^2/s^2 = W/(1-W), W ~ Beta(d/2, a - d/2)
double polynomial_radius(CounterRng& rng, int dim, double scale, double exponent) {
  std::gamma_distribution<double> g1(0.5 * dim, 1.0);
  std::gamma_distribution<double> g2(exponent - 0.5 * dim, 1.0);
  const double a = g1(rng);
  const double b = g2(rng);
  return scale * std::sqrt(a / b);
}

}  // namespace

std::string_view to_string(InitialKind kind) {
  return kind == InitialKind::gauss_x_truncgauss_v ? "gauss_x_truncgauss_v" : "polynomial_decay";
}

InitialKind parse_initial_kind(std::string_view name) {
  if (name == "gauss_x_truncgauss_v") return InitialKind::gauss_x_truncgauss_v;
  if (name == "polynomial_decay") return InitialKind::polynomial_decay;
  throw ConfigError("unknown initial density kind '" + std::string(name) + "'");
}

void InitialDensitySpec::validate() const {
  if (dim < 1 || dim > kMaxDim) throw ConfigError("initial density dimension must be 1, 2 or 3");
  if (!(s_x > 0.0) || !(s_v > 0.0)) throw ConfigError("initial density scales s_x, s_v must be positive");
  if (kind == InitialKind::gauss_x_truncgauss_v) {
    if (!(q_v > 0.0)) throw ConfigError("velocity support bound q_v must be positive");
  } else {
    if (!(alpha > 0.5 * dim)) throw ConfigError("polynomial decay requires alpha > d/2");
    if (!(beta > 0.5 * m0 + 0.5 * dim)) throw ConfigError("polynomial decay requires beta > m0/2 + d/2");
  }
}

InitialDensity::InitialDensity(const InitialDensitySpec& spec) : spec_(spec) {
  spec_.validate();
  const int d = spec_.dim;
  if (spec_.kind == InitialKind::gauss_x_truncgauss_v) {
    x_norm_ = gaussian_norm(d, spec_.s_x);
    const double q = spec_.q_v;
    const double s = spec_.s_v;
    auto integrand = [&](double r) {
      const double u = 1.0 - (r * r) / (q * q);
      return std::pow(r, d - 1) * std::exp(-0.5 * r * r / (s * s)) * u * u * u;
    };
    const double radial =
        boost::math::quadrature::gauss_kronrod<double, 61>::integrate(integrand, 0.0, q, 15, 1e-14);
    const double mass = unit_sphere_area(d) * gaussian_norm(d, s) * radial;
    v_norm_ = gaussian_norm(d, s) / mass;
  } else {
    x_norm_ = polynomial_norm(d, spec_.s_x, spec_.alpha);
    v_norm_ = polynomial_norm(d, spec_.s_v, spec_.beta);
  }
}

double InitialDensity::position_marginal(const Vec& x) const {
  const double r2 = norm2(x, spec_.dim) / (spec_.s_x * spec_.s_x);
  if (spec_.kind == InitialKind::gauss_x_truncgauss_v) return x_norm_ * std::exp(-0.5 * r2);
  return x_norm_ * std::pow(1.0 + r2, -spec_.alpha);
}

double InitialDensity::velocity_marginal(const Vec& v) const {
  const double w2 = norm2(v, spec_.dim);
  if (spec_.kind == InitialKind::gauss_x_truncgauss_v) {
    const double q2 = spec_.q_v * spec_.q_v;
    if (w2 >= q2) return 0.0;
    const double u = 1.0 - w2 / q2;
    return v_norm_ * std::exp(-0.5 * w2 / (spec_.s_v * spec_.s_v)) * u * u * u;
  }
  return v_norm_ * std::pow(1.0 + w2 / (spec_.s_v * spec_.s_v), -spec_.beta);
}

double InitialDensity::operator()(const Vec& x, const Vec& v) const {
  return position_marginal(x) * velocity_marginal(v);
}

std::pair<Vec, Vec> InitialDensity::grad_log(const Vec& x, const Vec& v) const {
  const int d = spec_.dim;
  Vec gx{0.0, 0.0, 0.0};
  Vec gv{0.0, 0.0, 0.0};
  const double sx2 = spec_.s_x * spec_.s_x;
  const double sv2 = spec_.s_v * spec_.s_v;
  if (spec_.kind == InitialKind::gauss_x_truncgauss_v) {
    const double q2 = spec_.q_v * spec_.q_v;
    const double u = 1.0 - norm2(v, d) / q2;
    for (int k = 0; k < d; ++k) {
      gx[k] = -x[k] / sx2;
      gv[k] = -v[k] / sv2 - 6.0 * v[k] / (q2 * u);
    }
  } else {
    const double ax = 1.0 + norm2(x, d) / sx2;
    const double av = 1.0 + norm2(v, d) / sv2;
    for (int k = 0; k < d; ++k) {
      gx[k] = -2.0 * spec_.alpha * x[k] / (sx2 * ax);
      gv[k] = -2.0 * spec_.beta * v[k] / (sv2 * av);
    }
  }
  return {gx, gv};
}

PhaseState InitialDensity::sample(std::size_t n, std::uint64_t seed, std::uint64_t index_offset) const {
  if (n < 1) throw ConfigError("sample_initial requires n >= 1");
  const int d = spec_.dim;
  PhaseState state(n, d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    CounterRng rng({seed, StreamLabel::initial, index_offset + i, 0});
    if (spec_.kind == InitialKind::gauss_x_truncgauss_v) {
      for (int k = 0; k < d; ++k) state.x[i * d + k] = spec_.s_x * rng.normal();
      const double q2 = spec_.q_v * spec_.q_v;
      bool accepted = false;
      for (int attempt = 0; attempt < kRetryBudget && !accepted; ++attempt) {
        Vec w{0.0, 0.0, 0.0};
        for (int k = 0; k < d; ++k) w[k] = spec_.s_v * rng.normal();
        const double w2 = norm2(w, d);
        if (w2 >= q2) continue;
        const double u = 1.0 - w2 / q2;
        if (rng.uniform() < u * u * u) {
          for (int k = 0; k < d; ++k) state.v[i * d + k] = w[k];
          accepted = true;
        }
      }
      if (!accepted)
        throw SamplingError("velocity rejection sampler exhausted its retry budget (q_v too small relative to s_v?)");
    } else {
      const Vec dx = random_direction(rng, d);
      const double rx = polynomial_radius(rng, d, spec_.s_x, spec_.alpha);
      const Vec dv = random_direction(rng, d);
      const double rv = polynomial_radius(rng, d, spec_.s_v, spec_.beta);
      for (int k = 0; k < d; ++k) {
        state.x[i * d + k] = rx * dx[k];
        state.v[i * d + k] = rv * dv[k];
      }
    }
  }
  return state;
}

PhaseState sample_initial(const InitialDensitySpec& spec, std::size_t n, std::uint64_t seed) {
  return InitialDensity(spec).sample(n, seed);
}

double density_eval(const InitialDensitySpec& spec, const Vec& x, const Vec& v) {
  return InitialDensity(spec)(x, v);
}

}  // namespace vpfp
