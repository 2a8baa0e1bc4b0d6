#include <doctest.h>

#include "vns/diagnostics.hpp"
#include "vns/egc.hpp"
#include "vns/oracle.hpp"

#include <cmath>
#include <cstdlib>
#include <sstream>

using namespace vns;

namespace {

DiagContext context() {
  DiagContext c;
  c.grid = GridDims{8, 8, 8};
  c.domain = Domain{};
  c.interp_constant = oracle::interpolation_constant(2.0, 0.0);
  return c;
}

ParticleEnsemble box_ensemble(long n, std::uint64_t seed) {
  InitialDataSpec s;
  return sample_initial(s, Domain{}, n, seed);
}

DiagnosticsSeries synthetic(const std::function<double(double)>& q, double t_end, int n) {
  DiagnosticsSeries s;
  for (int i = 0; i <= n; ++i) {
    DiagRow r;
    r.t = t_end * i / n;
    r.rho_sup = q(r.t);
    s.rows.push_back(r);
  }
  return s;
}

}  // namespace

TEST_CASE("vacuum and rest fluid give zero diagnostics") {
  const DiagContext c = context();
  const ParticleEnsemble e;
  const FluidField f = FluidField::zeros(c.grid, c.domain);
  const DiagRow r = compute_step_diagnostics(e, &f, field_sampler(f), 0.0, c);
  CHECK(r.E == 0.0);
  CHECK(r.D == 0.0);
  CHECK(r.D_G == 0.0);
  CHECK(r.rho_sup == 0.0);
  CHECK(r.j_L1 == 0.0);
  CHECK(r.brinkman_L2 == 0.0);
  CHECK(r.u_L2 == 0.0);
  CHECK(r.alive_mass == 0.0);
  for (const auto& [a, m] : r.M) CHECK(m == 0.0);
}

TEST_CASE("monokinetic terminal-velocity ensemble balances drag and gravity") {
  DiagContext c = context();
  c.g = 2.0;
  ParticleEnsemble e = box_ensemble(1000, 1);
  for (auto& p : e.particles) p.state.v = gravity(c.g);
  const DiagRow r = compute_step_diagnostics(e, nullptr, VelocitySampler::zero(), 0.0, c);
  CHECK(r.D == doctest::Approx(c.g * c.g).epsilon(1e-12));
  CHECK(std::abs(r.D_G) < 1e-12);
}

TEST_CASE("energy terms are consistent") {
  const DiagContext c = context();
  const ParticleEnsemble e = box_ensemble(3000, 2);
  const FluidField f = initial_field("cellular", 0.3, c.grid, c.domain);
  const VelocitySampler u = field_sampler(f);
  const DiagRow r = compute_step_diagnostics(e, &f, u, 0.0, c);
  double kin = 0.0, drag = 0.0, gv = 0.0;
  for (const auto& p : e.particles) {
    kin += 0.5 * p.weight * p.state.v.squaredNorm();
    drag += p.weight * (u(0.0, p.state.x) - p.state.v).squaredNorm();
    gv += p.weight * gravity(c.g).dot(p.state.v);
  }
  CHECK(r.kinetic_energy == doctest::Approx(kin).epsilon(1e-12));
  CHECK(r.drag_dissipation == doctest::Approx(drag).epsilon(1e-12));
  CHECK(r.gravity_power == doctest::Approx(gv).epsilon(1e-12));
  CHECK(r.E == doctest::Approx(kin + 0.5 * l2_norm_sq(f)).epsilon(1e-12));
  CHECK(r.D == doctest::Approx(drag + grad_norm_sq(f)).epsilon(1e-12));
  CHECK(r.D_G == r.D - r.gravity_power);
  CHECK(r.M.at(0.0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(r.M.at(2.0) == doctest::Approx(2.0 * kin).epsilon(1e-12));
  CHECK(r.rho_L1 == doctest::Approx(1.0).epsilon(1e-12));
  const KineticEnergyTerms k = kinetic_energy_terms(e, u, 0.0, c.g);
  CHECK(k.kinetic == doctest::Approx(kin).epsilon(1e-12));
  CHECK(k.drag == doctest::Approx(drag).epsilon(1e-12));
}

TEST_CASE("Hoelder bound for p = 2 and 3") {
  const DiagContext c = context();
  for (std::uint64_t seed : {3u, 4u, 5u}) {
    const ParticleEnsemble e = box_ensemble(4000, seed);
    const FluidField f = initial_field("cellular", 0.1 * seed, c.grid, c.domain);
    const DiagRow r = compute_step_diagnostics(e, &f, field_sampler(f), 0.0, c);
    CHECK(r.brinkman_L2 > 0.0);
    CHECK(r.brinkman_L2 <= r.holder_rhs_2 * (1 + 1e-12));
    CHECK(r.brinkman_L3 <= r.holder_rhs_3 * (1 + 1e-12));
  }
}

TEST_CASE("moment interpolation check on deposited fields") {
  const DiagContext c = context();
  const ParticleEnsemble e = box_ensemble(20000, 6);
  const DiagRow r = compute_step_diagnostics(e, nullptr, VelocitySampler::zero(), 0.0, c);
  CHECK(r.interp_violation_fraction == 0.0);
  CHECK(r.interp_max_ratio > 0.0);
  CHECK(r.interp_max_ratio <= 1.0);
}

TEST_CASE("maximum principle columns") {
  DiagContext c = context();
  c.f0_sup = normalize_spec(InitialDataSpec{}, c.domain).c;
  const ParticleEnsemble e = box_ensemble(500, 7);
  const DiagRow r = compute_step_diagnostics(e, nullptr, VelocitySampler::zero(), 0.0, c);
  CHECK(r.pointwise_max == doctest::Approx(r.pointwise_cap).epsilon(1e-12));
}

TEST_CASE("energy inequality for the gravity-only box run") {
  const DiagContext c = context();
  ParticleEnsemble e = box_ensemble(2000, 8);
  AdvanceOptions opt;
  opt.gravity_closed_form = true;
  const double dt = 0.01;
  KineticEnergyTerms prev = kinetic_energy_terms(e, VelocitySampler::zero(), 0.0, c.g);
  const double E0 = prev.kinetic;
  double intD = 0.0, intG = 0.0, t = 0.0;
  for (int k = 0; k < 300; ++k) {
    advance_ensemble(e, t, dt, VelocitySampler::zero(), opt);
    t += dt;
    const KineticEnergyTerms now = kinetic_energy_terms(e, VelocitySampler::zero(), t, c.g);
    intD += 0.5 * dt * (prev.drag + now.drag);
    intG += 0.5 * dt * (prev.gravity_power + now.gravity_power);
    CHECK(now.kinetic + intD <= E0 + intG + 1e-4);
    prev = now;
  }
}

TEST_CASE("energy and flux envelopes") {
  const double E0 = 0.3, M0 = 1.0, g = 1.5;
  CHECK(energy_envelope(E0, M0, g, 0.0) == doctest::Approx(E0));
  // sqrt(E)' <= g sqrt(M0/2) is the sublinear Gronwall law with beta = 1/2.
  std::vector<double> ts, h;
  for (int i = 0; i <= 100; ++i) {
    ts.push_back(0.05 * i);
    h.push_back(g * std::sqrt(2.0 * M0));
  }
  const auto env = oracle::sublinear_gronwall(E0, ts, h, 0.5);
  for (std::size_t i = 0; i < ts.size(); ++i)
    CHECK(energy_envelope(E0, M0, g, ts[i]) == doctest::Approx(env[i]).epsilon(1e-12));
  const double t = 2.0;
  CHECK(j_time_envelope(E0, M0, g, t) ==
        doctest::Approx(std::sqrt(2 * M0) * t * std::sqrt(E0) + g * M0 * t * t / 2).epsilon(1e-14));
}

TEST_CASE("decay fits") {
  SUBCASE("exact power law") {
    const auto s = synthetic([](double t) { return 3.0 * std::pow(1 + t, -2.0); }, 50.0, 200);
    const DecayFit f = fit_decay(s, "rho_sup", 1.0, 50.0);
    CHECK(std::abs(f.exponent + 2.0) <= 1e-6);
    CHECK(f.envelope_constant == doctest::Approx(3.0).epsilon(1e-6));
    CHECK(f.residual < 1e-10);
    CHECK_FALSE(f.super_polynomial);
  }
  SUBCASE("exponential is flagged") {
    const auto s = synthetic([](double t) { return std::exp(-t); }, 20.0, 200);
    const DecayFit a = fit_decay(s, "rho_sup", 1.0, 10.0);
    const DecayFit b = fit_decay(s, "rho_sup", 1.0, 20.0);
    CHECK(b.exponent < a.exponent);
    CHECK(b.super_polynomial);
  }
  SUBCASE("errors") {
    const auto s = synthetic([](double t) { return t < 5 ? 1.0 : 0.0; }, 10.0, 100);
    try {
      fit_decay(s, "rho_sup", 1.0, 10.0);
      FAIL("no error");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::NonPositiveData);
    }
    try {
      fit_decay(s, "rho_sup", 3.0, 3.0);
      FAIL("no error");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::DomainError);
    }
    try {
      fit_decay(s, "no_such_column", 1.0, 2.0);
      FAIL("no error");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::MissingColumn);
    }
  }
}

TEST_CASE("extinction time") {
  DiagnosticsSeries s;
  for (int i = 0; i < 10; ++i) {
    DiagRow r;
    r.t = 0.5 * i;
    r.alive_mass = i < 6 ? 1.0 - 0.1 * i : 0.0;
    s.rows.push_back(r);
  }
  REQUIRE(extinction_time(s).has_value());
  CHECK(*extinction_time(s) == 3.0);
  s.rows.resize(5);
  CHECK_FALSE(extinction_time(s).has_value());
}

TEST_CASE("bootstrap monitor") {
  const double g = 1.0;
  const double delta0 = default_delta0(g);
  const double T0 = t0(1.0, 1.0, g) + 1.0;
  SUBCASE("zero field") {
    DiagnosticsSeries s;
    for (int i = 0; i <= 100; ++i) {
      DiagRow r;
      r.t = 0.1 * i;
      s.rows.push_back(r);
    }
    const BootstrapReport b = bootstrap_monitor(s, delta0, T0);
    CHECK(b.holds);
    CHECK_FALSE(b.first_violation.has_value());
    CHECK(b.margin_grad == delta0);
  }
  SUBCASE("prescribed field using 0.9 delta0 after T0") {
    PrescribedFieldSpec ps;
    ps.budget = 0.9 * delta0;
    ps.budget_kind = "grad";
    ps.horizon = 3.0;
    const PrescribedField f(ps, Domain{});
    REQUIRE(f.budget_u(ps.horizon) < 0.5 * delta0);
    DiagnosticsSeries s;
    for (int i = 0; i <= 200; ++i) {
      DiagRow r;
      r.t = 0.05 * i;
      // switched on at T0
      r.budget_grad = f.budget_grad(std::max(0.0, r.t - T0));
      r.budget_u = f.budget_u(std::max(0.0, r.t - T0));
      s.rows.push_back(r);
    }
    const BootstrapReport b = bootstrap_monitor(s, delta0, T0);
    CHECK(b.holds);
    CHECK(b.margin_grad == doctest::Approx(0.1 * delta0).epsilon(1e-9));
  }
  SUBCASE("large field is reported with a time stamp") {
    DiagnosticsSeries s;
    for (int i = 0; i <= 100; ++i) {
      DiagRow r;
      r.t = 0.1 * i;
      r.budget_grad = 0.5 * r.t;
      r.budget_u = 0.1 * r.t;
      s.rows.push_back(r);
    }
    const BootstrapReport b = bootstrap_monitor(s, delta0, T0);
    CHECK_FALSE(b.holds);
    REQUIRE(b.first_violation.has_value());
    CHECK(*b.first_violation > T0);
    CHECK(*b.first_violation <= T0 + 2.0 * delta0 + 0.1);
  }
}

TEST_CASE("CSV output") {
  const DiagContext c = context();
  const ParticleEnsemble e = box_ensemble(200, 9);
  DiagnosticsSeries s;
  s.moment_orders = c.moment_orders;
  s.rows.push_back(compute_step_diagnostics(e, nullptr, VelocitySampler::zero(), 0.0, c));
  s.rows.push_back(compute_step_diagnostics(e, nullptr, VelocitySampler::zero(), 1.0 / 3.0, c));
  std::ostringstream os;
  write_csv(os, s);
  const std::string text = os.str();
  CHECK(text.find("\r\n") != std::string::npos);
  const auto cols = s.columns();
  const std::vector<std::string> lead = {"t", "E", "D", "D_G", "M_0", "M_1", "M_2", "M_3", "M_6", "rho_sup",
                                         "rho_L1", "rho_L2", "rho_L3", "rho_Linf", "j_L1", "brinkman_L2",
                                         "brinkman_L3", "u_L2", "u_Linf", "grad_u_Linf", "budget_u",
                                         "budget_grad", "strong_time_lhs", "alive_mass"};
  REQUIRE(cols.size() >= lead.size());
  for (std::size_t i = 0; i < lead.size(); ++i) CHECK(cols[i] == lead[i]);
  std::istringstream is(text);
  const CsvTable tab = read_csv(is);
  CHECK(tab.header == cols);
  REQUIRE(tab.rows.size() == 2);
  for (std::size_t r = 0; r < 2; ++r) {
    const auto v = s.values(s.rows[r]);
    for (std::size_t k = 0; k < v.size(); ++k) CHECK(tab.rows[r][k] == v[k]);
  }
  CHECK(tab.column("t")[1] == 1.0 / 3.0);
}

TEST_CASE("CSV quoting") {
  CHECK(csv_quote("plain") == "plain");
  CHECK(csv_quote("a,b") == "\"a,b\"");
  CHECK(csv_quote("say \"hi\"") == "\"say \"\"hi\"\"\"");
  std::istringstream is("\"x,1\",\"y\"\"\"\r\n1,2\r\n");
  const CsvTable t = read_csv(is);
  REQUIRE(t.header.size() == 2);
  CHECK(t.header[0] == "x,1");
  CHECK(t.header[1] == "y\"");
  CHECK(t.column("x,1")[0] == 1.0);
}

TEST_CASE("reductions do not depend on the worker count") {
  DiagContext c = context();
  c.deterministic = true;
  const ParticleEnsemble e = box_ensemble(5000, 10);
  const FluidField f = initial_field("cellular", 0.3, c.grid, c.domain);
  DiagnosticsSeries s;
  const char* old = std::getenv("VNS_THREADS");
  const std::string saved = old ? old : "";
  setenv("VNS_THREADS", "1", 1);
  const auto a = s.values(compute_step_diagnostics(e, &f, field_sampler(f), 0.5, c));
  setenv("VNS_THREADS", "3", 1);
  const auto b = s.values(compute_step_diagnostics(e, &f, field_sampler(f), 0.5, c));
  if (old) setenv("VNS_THREADS", saved.c_str(), 1);
  else unsetenv("VNS_THREADS");
  REQUIRE(a.size() == b.size());
  const auto cols = s.columns();
  for (std::size_t i = 0; i < a.size(); ++i) CHECK_MESSAGE(a[i] == b[i], cols[i]);
}
