#include <doctest.h>

#include "vns/egc.hpp"
#include "vns/kinetic.hpp"
#include "vns/oracle.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numeric>

using namespace vns;

namespace {

InitialDataSpec box(double L, double R) {
  InitialDataSpec s;
  s.family = DataFamily::box;
  s.L = L;
  s.R = R;
  return s;
}

InitialDataSpec poly(double q, double m) {
  InitialDataSpec s;
  s.family = DataFamily::poly_decay;
  s.q = q;
  s.m = m;
  s.Lmax = 4.0;
  return s;
}

struct Moments {
  double m0 = 0.0;
  double m2 = 0.0;
  double m4 = 0.0;
};

Moments empirical(const ParticleEnsemble& e) {
  Moments m;
  for (const auto& p : e.particles) {
    const double v2 = p.state.v.squaredNorm();
    m.m0 += p.weight;
    m.m2 += p.weight * v2;
    m.m4 += p.weight * v2 * v2;
  }
  return m;
}

}  // namespace

TEST_CASE("box sampling: mass and second moment") {
  const Domain d;
  const long N = 10000;
  const ParticleEnsemble e = sample_initial(box(1, 1), d, N, 42);
  REQUIRE(e.particles.size() == static_cast<std::size_t>(N));
  const Moments m = empirical(e);
  CHECK(m.m0 == doctest::Approx(1.0).epsilon(1e-12));
  const double M2 = oracle::moment_quadrature(box(1, 1), d, 2.0);
  CHECK(M2 == doctest::Approx(3.0 / 5.0).epsilon(1e-8));
  const double sigma = std::sqrt((m.m4 - m.m2 * m.m2) / N);
  CHECK(std::abs(m.m2 - M2) <= 3.0 * sigma);
  for (const auto& p : e.particles) {
    CHECK(p.weight == 1.0 / N);
    CHECK(p.f0_value == doctest::Approx(f0_value(normalize_spec(box(1, 1), d), p.origin.x, p.origin.v)));
    CHECK(p.state.x(2) > 0.0);
    CHECK(p.state.x(2) < 1.0);
    CHECK(p.state.v.norm() < 1.0);
  }
}

TEST_CASE("sampling is deterministic in the seed") {
  const Domain d;
  const ParticleEnsemble a = sample_initial(poly(8, 3), d, 500, 9);
  const ParticleEnsemble b = sample_initial(poly(8, 3), d, 500, 9);
  const ParticleEnsemble c = sample_initial(poly(8, 3), d, 500, 10);
  bool differs = false;
  for (std::size_t i = 0; i < a.particles.size(); ++i) {
    CHECK(a.particles[i].state.x == b.particles[i].state.x);
    CHECK(a.particles[i].state.v == b.particles[i].state.v);
    differs = differs || a.particles[i].state.x != c.particles[i].state.x;
  }
  CHECK(differs);
}

TEST_CASE("single particle ensemble") {
  const ParticleEnsemble e = sample_initial(box(1, 1), Domain{}, 1, 5);
  REQUIRE(e.particles.size() == 1);
  CHECK(e.particles[0].weight == 1.0);
  CHECK(e.alive_mass() == 1.0);
}

TEST_CASE("poly_decay sampling matches the quadrature moments") {
  const Domain d;
  const InitialDataSpec s = poly(8, 3);
  const long N = 40000;
  const ParticleEnsemble e = sample_initial(s, d, N, 4);
  const Moments m = empirical(e);
  const double M2 = oracle::moment_quadrature(s, d, 2.0);
  const double sigma = std::sqrt((m.m4 - m.m2 * m.m2) / N);
  CHECK(std::abs(m.m2 - M2) <= 3.0 * sigma);
  // N_q against dense sampling of (1 + r^q) f0 along the worst ray (x3 = 0).
  const InitialDataSpec n = normalize_spec(s, d);
  const double Nq = functional_N(s, d, 8.0);
  const double dense = oracle::dense_sup(
      [&](double r) { return (1 + std::pow(r, 8.0)) * f0_value(n, Vec3(0, 0, 1e-12), Vec3(r, 0, 0)); },
      0.0, 20.0, 200000);
  CHECK(Nq == doctest::Approx(dense).epsilon(1e-6));
  double emp = 0.0;
  for (const auto& p : e.particles) emp = std::max(emp, (1 + std::pow(p.origin.v.norm(), 8)) * p.f0_value);
  CHECK(emp <= Nq * (1 + 1e-12));
}

TEST_CASE("unnormalizable specs") {
  const Domain d;
  InitialDataSpec s = box(1, 1);
  s.c = 0.0;
  s.normalized = false;
  CHECK_THROWS_AS(sample_initial(s, d, 10, 1), Error);
  try {
    sample_initial(s, d, 10, 1);
  } catch (const Error& e) {
    CHECK(e.code() == Errc::UnnormalizableSpec);
  }
  InitialDataSpec p = poly(3, 3);  // velocity tail not integrable
  p.Rmax = kInf;
  try {
    sample_initial(p, d, 10, 1);
    FAIL("no error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::UnnormalizableSpec);
  }
}

TEST_CASE("gravity-only box ensemble is extinct before t0") {
  const Domain d;
  ParticleEnsemble e = sample_initial(box(1, 1), d, 10000, 11);
  AdvanceOptions opt;
  opt.gravity_closed_form = true;
  const double dt = 0.05;
  double prev = e.alive_mass();
  double t = 0.0;
  while (t < t0(1.0, 1.0, 1.0) - 1e-12) {
    advance_ensemble(e, t, dt, VelocitySampler::zero(), opt);
    t += dt;
    CHECK(e.alive_mass() <= prev);
    prev = e.alive_mass();
  }
  CHECK(e.alive_count() == 0);
  double last = 0.0;
  for (const auto& p : e.graveyard) last = std::max(last, *p.exit_time);
  CHECK(last < 3.0);
  CHECK(e.graveyard.size() == 10000);
}

TEST_CASE("single particle exit time from rest") {
  ParticleEnsemble e;
  Particle p;
  p.state.x = Vec3(0.5, 0.5, 2.0);
  p.origin = p.state;
  p.weight = 1.0;
  p.f0_value = 1.0;
  e.particles.push_back(p);
  e.initial_count = 1;
  const double ref = oracle::bisect_root(
      [](double t) { return 2.0 + (t + std::exp(-t) - 1.0) * (-1.0); }, 0.0, 10.0);
  for (bool closed : {true, false}) {
    ParticleEnsemble w = e;
    AdvanceOptions opt;
    opt.gravity_closed_form = closed;
    double t = 0.0;
    while (w.alive_count() > 0 && t < 10.0) {
      advance_ensemble(w, t, 0.1, VelocitySampler::zero(), opt);
      t += 0.1;
    }
    REQUIRE(w.graveyard.size() == 1);
    CHECK(*w.graveyard[0].exit_time == doctest::Approx(ref).epsilon(1e-9));
  }
}

TEST_CASE("exit times under step refinement") {
  const Domain d;
  const ParticleEnsemble e0 = sample_initial(box(1, 1), d, 200, 3);
  auto run = [&](double dt, bool closed, const VelocitySampler& u) {
    ParticleEnsemble e = e0;
    AdvanceOptions opt;
    opt.gravity_closed_form = closed;
    double t = 0.0;
    while (e.alive_count() > 0 && t < 6.0) {
      advance_ensemble(e, t, dt, u, opt);
      t += dt;
    }
    std::vector<double> et(e0.particles.size(), 0.0);
    for (const auto& p : e.graveyard) {
      for (std::size_t i = 0; i < e0.particles.size(); ++i)
        if (e0.particles[i].origin.x == p.origin.x && e0.particles[i].origin.v == p.origin.v)
          et[i] = *p.exit_time;
    }
    return et;
  };
  SUBCASE("gravity only: identical") {
    const auto a = run(0.1, true, VelocitySampler::zero());
    const auto b = run(0.05, true, VelocitySampler::zero());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
  }
  SUBCASE("prescribed field: first order") {
    PrescribedFieldSpec s;
    s.amplitude = 0.3;
    const PrescribedField f(s, d);
    const auto u = f.sampler();
    const auto a = run(0.04, false, u);
    const auto b = run(0.02, false, u);
    const auto c = run(0.01, false, u);
    double dab = 0, dbc = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      dab = std::max(dab, std::abs(a[i] - b[i]));
      dbc = std::max(dbc, std::abs(b[i] - c[i]));
    }
    CHECK(dab > 0.0);
    CHECK(dab <= 10 * 0.04);
    CHECK(std::log2(dab / dbc) >= 0.8);
  }
}

TEST_CASE("pointwise value") {
  Particle p;
  p.f0_value = 0.5;
  CHECK(pointwise_value(p, 0.0) == 0.5);
  CHECK(pointwise_value(p, 1.0) == doctest::Approx(0.5 * std::exp(3.0)).epsilon(1e-15));
  CHECK(pointwise_value(p, 1.0) == doctest::Approx(10.0428).epsilon(1e-5));
  p.alive = false;
  p.exit_time = 0.3;
  try {
    pointwise_value(p, 1.0);
    FAIL("no error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::DeadParticle);
  }
}

TEST_CASE("CIC stencil is a partition of unity") {
  const GridDims g{4, 5, 6};
  const Domain d;
  Rng rng(1);
  for (int i = 0; i < 200; ++i) {
    const Vec3 x(d.Lx * rng.uniform(), d.Ly * rng.uniform(), d.Zmax * (0.001 + 0.998 * rng.uniform()));
    CicStencil s;
    REQUIRE(cic_stencil(g, d, x, s));
    double sum = 0.0;
    for (double w : s.weight) {
      CHECK(w >= 0.0);
      sum += w;
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-14));
  }
  CicStencil s;
  CHECK_FALSE(cic_stencil(g, d, Vec3(0, 0, -0.1), s));
  CHECK_FALSE(cic_stencil(g, d, Vec3(0, 0, d.Zmax + 0.1), s));
}

TEST_CASE("deposition conserves mass and moments") {
  const GridDims g{8, 8, 8};
  const Domain d;
  SUBCASE("single particle mid-cell") {
    ParticleEnsemble e;
    Particle p;
    p.state.x = Vec3(0.3, 0.7, 1.1);
    p.state.v = Vec3(0.1, 0.2, -0.3);
    p.weight = 0.37;
    e.particles.push_back(p);
    const MomentField m = deposit_moments(e, g, d, {2.0});
    CHECK(m.rho.sum() * m.cell_volume() == doctest::Approx(0.37).epsilon(1e-14));
    CHECK(m.j[2].sum() * m.cell_volume() == doctest::Approx(0.37 * -0.3).epsilon(1e-14));
    CHECK(m.higher.at(2.0).sum() * m.cell_volume() ==
          doctest::Approx(0.37 * p.state.v.squaredNorm()).epsilon(1e-14));
    CHECK((m.rho >= 0.0).all());
  }
  SUBCASE("box ensemble: M2 against quadrature, independent of grid") {
    const long N = 20000;
    const ParticleEnsemble e = sample_initial(box(1, 1), d, N, 8);
    const Moments em = empirical(e);
    const MomentField a = deposit_moments(e, g, d, {2.0});
    const MomentField b = deposit_moments(e, GridDims{4, 4, 16}, d, {2.0});
    const double Ma = a.higher.at(2.0).sum() * a.cell_volume();
    const double Mb = b.higher.at(2.0).sum() * b.cell_volume();
    CHECK(Ma == doctest::Approx(Mb).epsilon(1e-12));
    const double sigma = std::sqrt((em.m4 - em.m2 * em.m2) / N);
    CHECK(std::abs(Ma - oracle::moment_quadrature(box(1, 1), d, 2.0)) <= 3.0 * sigma);
    // Cauchy-Schwarz per cell: |j|^2 <= rho m2.
    for (long c = 0; c < g.cells(); ++c) {
      const double j2 = a.j[0][c] * a.j[0][c] + a.j[1][c] * a.j[1][c] + a.j[2][c] * a.j[2][c];
      CHECK(j2 <= a.rho[c] * a.higher.at(2.0)[c] * (1 + 1e-12) + 1e-300);
    }
  }
  SUBCASE("deterministic deposition is reproducible") {
    const ParticleEnsemble e = sample_initial(box(1, 1), d, 3000, 8);
    const MomentField a = deposit_moments(e, g, d, {}, true);
    const MomentField b = deposit_moments(e, g, d, {}, true);
    CHECK((a.rho == b.rho).all());
  }
}

TEST_CASE("decay functionals") {
  const Domain d;
  SUBCASE("box closed form") {
    InitialDataSpec s = box(1.0, 1.5);
    s.c = 2.0;
    s.normalized = false;
    const double q = 4.0;
    const double N = functional_N(s, d, q);
    CHECK(N == doctest::Approx(2.0 * (1 + std::pow(1.5, q))).epsilon(1e-14));
    const double dense = oracle::dense_sup(
        [&](double r) { return (1 + std::pow(r, q)) * f0_value(s, Vec3(0, 0, 0.5), Vec3(r, 0, 0)); },
        0.0, 3.0, 300000);
    CHECK(N == doctest::Approx(dense).epsilon(1e-3));
  }
  SUBCASE("zero data") {
    InitialDataSpec s = box(1, 1);
    s.c = 0.0;
    s.normalized = false;
    const DecayFunctionals f = decay_functionals(s, d, 2.0, 2.0, 1.0);
    CHECK(f.N == 0.0);
    CHECK(f.K == 0.0);
    CHECK(f.H == 0.0);
    CHECK(f.F == 0.0);
  }
  SUBCASE("poly_decay divergence") {
    InitialDataSpec s = poly(8, 3);
    CHECK(std::isfinite(functional_N(s, d, 8.0)));
    try {
      functional_N(s, d, 9.0);
      FAIL("no error");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::DivergentFunctional);
    }
  }
}

TEST_CASE("maximum principle holds by construction") {
  const Domain d;
  ParticleEnsemble e = sample_initial(box(1, 1), d, 2000, 2);
  PrescribedFieldSpec s;
  s.amplitude = 0.2;
  const PrescribedField f(s, d);
  AdvanceOptions opt;
  const double sup0 = functional_N(normalize_spec(box(1, 1), d), d, 0.0);
  double t = 0.0;
  for (int k = 0; k < 50; ++k) {
    advance_ensemble(e, t, 0.02, f.sampler(), opt);
    t += 0.02;
    for (const auto& p : e.particles) CHECK(pointwise_value(p, t) <= std::exp(3 * t) * sup0 * (1 + 1e-14));
  }
}

TEST_CASE("ensemble snapshot round trip") {
  ParticleEnsemble e = sample_initial(box(1, 1), Domain{}, 100, 6);
  AdvanceOptions opt;
  opt.gravity_closed_form = true;
  advance_ensemble(e, 0.0, 1.5, VelocitySampler::zero(), opt);
  const auto path = (std::filesystem::temp_directory_path() / "vns_test_ens.vnse").string();
  write_ensemble_snapshot(path, e);
  const ParticleEnsemble r = read_ensemble_snapshot(path);
  std::remove(path.c_str());
  CHECK(r.time == e.time);
  CHECK(r.initial_count == e.initial_count);
  REQUIRE(r.particles.size() == e.particles.size());
  REQUIRE(r.graveyard.size() == e.graveyard.size());
  for (std::size_t i = 0; i < r.particles.size(); ++i) {
    CHECK(r.particles[i].state.x == e.particles[i].state.x);
    CHECK(r.particles[i].weight == e.particles[i].weight);
  }
  // The record carries no exit time; absorbed particles keep their wall position.
  for (std::size_t i = 0; i < r.graveyard.size(); ++i) {
    CHECK_FALSE(r.graveyard[i].alive);
    CHECK(r.graveyard[i].state.x == e.graveyard[i].state.x);
  }
}
