// Acceptance run: one PASS/FAIL line per criterion, exit 1 if any fails.

#include "vns/characteristics.hpp"
#include "vns/diagnostics.hpp"
#include "vns/egc.hpp"
#include "vns/fluid.hpp"
#include "vns/kinetic.hpp"
#include "vns/oracle.hpp"
#include "vns/run.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

using namespace vns;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t).count();
}

std::string fmt(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", x);
  return buf;
}

// Runs kept for the run-wide checks of criterion 9.
struct KeptRun {
  std::string name;
  ValidatedConfig vc;
  RunResult r;
};
std::vector<KeptRun> g_runs;

bool check_passed(const ValidatedConfig& vc, const RunResult& r, const std::string& name,
                  std::string* detail = nullptr) {
  const auto c = run_checks(vc, r, {name});
  if (detail) *detail = c[0].detail;
  return c[0].passed;
}

Outcome criterion1() {
  const auto w = std::chrono::steady_clock::now();
  EgcOptions opt;
  opt.g = 1.0;
  const EgcQuery q{1.0, 1.0, t0(1.0, 1.0, 1.0)};
  const EgcReport r = verify_egc(q, Mode::gravity_only, VelocitySampler::zero(), 100000, 1, opt);
  const double wall = seconds_since(w);
  const double sup = gravity_corner_sup(1.0, 1.0, 1.0);
  bool monotone = true;
  double prev = 0.0;
  for (long n : {10L, 100L, 1000L, 10000L, 100000L}) {
    const double m = verify_egc(q, Mode::gravity_only, VelocitySampler::zero(), n, 1, opt).max_exit_time;
    if (m < prev || m > sup) monotone = false;
    prev = m;
  }
  Outcome o;
  o.pass = r.max_exit_time < 3.0 && r.unexited == 0 && monotone && wall < 10.0;
  o.detail = "max_exit=" + fmt(r.max_exit_time) + " corner_sup=" + fmt(sup) +
             " monotone=" + (monotone ? "yes" : "no") + " time=" + fmt(wall) + "s";
  return o;
}

Outcome criterion2() {
  const auto w = std::chrono::steady_clock::now();
  RunConfig c = preset_config("prescribed-small");
  c.particle_count = 10000;
  c.field.budget = 0.9 * kappa(0.5, c.g);
  c.field.budget_kind = "u";
  c.field.horizon = 3.5;
  c.t_end = t0(1.0, 1.0, c.g) + 0.5;
  const ValidatedConfig vc = validate_config(c);
  RunResult r = simulate(vc);
  const double wall = seconds_since(w);
  const PrescribedField f(vc.cfg.field, vc.cfg.domain);
  const double budget = f.budget_u(3.5);
  Outcome o;
  const long alive = r.ensemble.alive_count();
  o.pass = !r.truncated && alive == 0 && r.extinction_time && *r.extinction_time <= c.t_end &&
           wall < 60.0;
  o.detail = "budget=" + fmt(budget) + " alive=" + std::to_string(alive) +
             " extinction=" + (r.extinction_time ? fmt(*r.extinction_time) : "none") +
             " time=" + fmt(wall) + "s";
  g_runs.push_back({"prescribed-small", vc, std::move(r)});
  return o;
}

Outcome criterion3() {
  // Gravity-only flow by substeps against the closed form.
  std::mt19937_64 eng(3);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  double worst = 0.0;
  for (double dt : {1e-3, 1e-2, 0.1, 0.37}) {
    for (int k = 0; k < 20; ++k) {
      const PhasePoint z{Vec3(U(eng), U(eng), 5.0 + 4.0 * U(eng)), Vec3(U(eng), U(eng), U(eng))};
      for (double t : {0.5, 1.0, 2.5, 5.0, 7.5, 10.0}) {
        const FlowResult a = integrate_flow(z, 0.0, t, dt, VelocitySampler::zero(), 1.0, false);
        const FlowResult b = gravity_flow(t, 0.0, z, 1.0);
        const double sx = std::max(1.0, b.X.norm()), sv = std::max(1.0, b.V.norm());
        worst = std::max({worst, (a.X - b.X).norm() / sx, (a.V - b.V).norm() / sv});
      }
    }
  }
  // Coupled integrator under dt halving against the fourth-order oracle.
  PrescribedFieldSpec s;
  s.amplitude = 0.3;
  const PrescribedField f(s, Domain{});
  const auto u = f.sampler();
  const PhasePoint z{Vec3(0.4, 0.3, 3.0), Vec3(0.2, -0.1, 0.3)};
  const FlowResult ref = oracle::ode_reference_flow(z, 0.0, 1.0, u, 1.0, 1e-4);
  std::vector<double> err;
  for (double dt : {0.04, 0.02, 0.01, 0.005}) {
    const FlowResult a = integrate_flow(z, 0.0, 1.0, dt, u, 1.0, false);
    err.push_back(std::max((a.X - ref.X).norm(), (a.V - ref.V).norm()));
  }
  double order = kInf;
  for (std::size_t i = 1; i < err.size(); ++i) order = std::min(order, std::log2(err[i - 1] / err[i]));
  Outcome o;
  o.pass = worst <= 1e-12 && order >= 1.0;
  o.detail = "gravity_rel_err=" + fmt(worst) + " coupled_min_order=" + fmt(order);
  return o;
}

Outcome criterion4() {
  std::mt19937_64 eng(4);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  const Domain d;
  auto point = [&](Vec3& x, Vec3& v, double& t) {
    t = 5.0 * U(eng);
    x = Vec3(d.Lx * U(eng), d.Ly * U(eng), 0.05 + 3.0 * U(eng));
    v = Vec3(2 * U(eng) - 1, 2 * U(eng) - 1, 2 * U(eng) - 1);
  };
  double zero_err = 0.0;
  for (int i = 0; i < 200; ++i) {
    Vec3 x, v;
    double t;
    point(x, v, t);
    const double det = jacobian_certificate(t, x, v, VelocitySampler::zero(), 1.0);
    zero_err = std::max(zero_err, std::abs(det / std::exp(3 * t) - 1.0));
  }
  PrescribedFieldSpec s;
  s.budget_kind = "grad";
  s.budget = 0.8 * default_delta0(1.0);
  s.horizon = 5.0;
  const PrescribedField f(s, d);
  const auto u = f.sampler();
  double worst = kInf;
  for (int i = 0; i < 1000; ++i) {
    Vec3 x, v;
    double t;
    point(x, v, t);
    worst = std::min(worst, jacobian_certificate(t, x, v, u, 1.0) / std::exp(3 * t));
  }
  Outcome o;
  // Central differences at h = 1e-5 (1 + |v|) leave roughly 1e-6 relative error.
  o.pass = zero_err <= 1e-6 && worst >= 0.5;
  o.detail = "zero_field_rel_err=" + fmt(zero_err) + " grad_budget=" + fmt(f.budget_grad(5.0)) +
             " min_det_over_e3t=" + fmt(worst);
  return o;
}

Outcome criterion5() {
  RunConfig c = preset_config("gravity-box");
  const ValidatedConfig vc = validate_config(c);
  RunResult r = simulate(vc);
  RunConfig cc = preset_config("coupled-small");
  cc.t_end = 2.0;
  const ValidatedConfig vcc = validate_config(cc);
  RunResult rc = simulate(vcc);
  bool ok = !r.truncated && !rc.truncated;
  std::string detail;
  for (const auto* run : {&r, &rc}) {
    const ValidatedConfig& v = run == &r ? vc : vcc;
    std::string dm, dp;
    ok = ok && check_passed(v, *run, "mass_monotone", &dm) && check_passed(v, *run, "max_principle", &dp);
    detail += (run == &r ? "gravity-box " : " coupled-small ") + dm + " " + dp;
  }
  // Pointwise values are e^{3t} f0 exactly.
  long inexact = 0;
  for (const auto& p : rc.ensemble.particles)
    if (p.alive && pointwise_value(p, rc.t_reached) != std::exp(3 * rc.t_reached) * p.f0_value) ++inexact;
  ok = ok && inexact == 0;
  detail += " inexact_values=" + std::to_string(inexact);
  g_runs.push_back({"gravity-box", vc, std::move(r)});
  g_runs.push_back({"coupled-small", vcc, std::move(rc)});
  return {ok, detail};
}

Outcome criterion6() {
  // Three levels of simultaneous (dt, h) refinement on the coupled small-data run.
  struct Level {
    int n;
    double dt;
  };
  const std::vector<Level> levels = {{8, 0.04}, {16, 0.02}, {32, 0.01}};
  std::vector<double> defect, hs;
  bool below = true;
  std::ostringstream d;
  const auto w = std::chrono::steady_clock::now();
  for (const auto& L : levels) {
    RunConfig c = preset_config("coupled-small");
    c.grid = GridDims{L.n, L.n, L.n};
    c.dt = L.dt;
    c.t_end = 1.0;
    c.particle_count = 10000;
    c.diag_every = 1;
    const ValidatedConfig vc = validate_config(c);
    RunResult r = simulate(vc);
    if (r.truncated) return {false, "level " + std::to_string(L.n) + " truncated: " + r.error};
    const double h = c.domain.Zmax / L.n;
    const double E0 = r.series.rows.front().E;
    const double tol = 1e-2 * (L.dt + h) * std::max(1.0, E0);
    double pos = 0.0, worst = 0.0;
    for (const auto& row : r.series.rows) {
      pos = std::max(pos, row.energy_residual);
      worst = std::max(worst, std::abs(row.energy_residual + row.exit_energy));
    }
    if (pos > tol) below = false;
    defect.push_back(worst);
    hs.push_back(h);
    d << "N=" << L.n << " residual+=" << fmt(pos) << " tol=" << fmt(tol) << " defect=" << fmt(worst) << "; ";
    g_runs.push_back({"coupled-" + std::to_string(L.n), vc, std::move(r)});
  }
  // Least-squares slope of log defect against log h over the three levels.
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < hs.size(); ++i) {
    const double x = std::log(hs[i]), y = std::log(defect[i]);
    sx += x, sy += y, sxx += x * x, sxy += x * y;
  }
  const double n = static_cast<double>(hs.size());
  const double order = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  d << "order=" << fmt(order) << " time=" << fmt(seconds_since(w)) << "s";
  return {below && order >= 1.0, d.str()};
}

Outcome criterion7() {
  const ValidatedConfig vc = validate_config(preset_config("decaying-force"));
  RunResult r = simulate(vc);
  std::string detail;
  const bool ok = !r.truncated && vc.cfg.t_end >= 100.0 && check_passed(vc, r, "force_envelope", &detail);
  return {ok, detail};
}

Outcome criterion8() {
  const auto w = std::chrono::steady_clock::now();
  const ValidatedConfig vc = validate_config(preset_config("poly-decay"));
  RunResult r = simulate(vc);
  if (r.truncated) return {false, "truncated: " + r.error};
  const auto& rows = r.series.rows;
  const InitialDataSpec& spec = vc.cfg.data;
  std::size_t i0 = 0;
  while (i0 < rows.size() && rows[i0].t <= vc.T0) ++i0;
  if (i0 >= rows.size()) return {false, "no samples after T0"};
  auto bound = [&](double t) {
    return predicted_moment_decay(spec, vc.cfg.domain, t, 2, 2, spec.q, 0, vc.cfg.g).bound_point;
  };
  const double C = rows[i0].rho_sup / bound(rows[i0].t);
  long violations = 0;
  std::vector<double> ts, qs;
  for (std::size_t i = i0; i < rows.size(); ++i) {
    if (rows[i].rho_sup > C * bound(rows[i].t) * (1 + 1e-12)) ++violations;
    if (rows[i].rho_sup > 0) {
      ts.push_back(rows[i].t);
      qs.push_back(rows[i].rho_sup);
    }
  }
  const DecayFit fit = fit_decay(ts, qs, rows[i0].t, rows.back().t);
  Outcome o;
  o.pass = violations == 0 && fit.exponent <= -1.85;
  o.detail = "fitted_constant=" + fmt(C) + " violations=" + std::to_string(violations) +
             " exponent=" + fmt(fit.exponent) + " top_flags=" + std::to_string(r.top_flags) +
             " time=" + fmt(seconds_since(w)) + "s";
  g_runs.push_back({"poly-decay", vc, std::move(r)});
  return o;
}

Outcome criterion9() {
  std::mt19937_64 eng(9);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  long bad_profiles = 0;
  double worst = 0.0;
  for (int n = 0; n < 100; ++n) {
    oracle::RadialProfile h;
    h.edges.push_back(0.0);
    double r = 0.0;
    const int shells = 1 + static_cast<int>(U(eng) * 30);
    for (int i = 0; i < shells; ++i) {
      r += 0.02 + 3.0 * U(eng);
      h.edges.push_back(r);
      h.values.push_back(U(eng));
    }
    const double q = oracle::interpolation_ratio(h, 2.0, 0.0);
    worst = std::max(worst, q);
    if (!(q <= 1.0)) ++bad_profiles;
  }
  long bad_runs = 0;
  std::string failed;
  for (const auto& k : g_runs) {
    bool ok = check_passed(k.vc, k.r, "holder_bound");
    if (k.vc.cfg.mode != Mode::fluid_only) ok = ok && check_passed(k.vc, k.r, "energy_envelope");
    if (!ok) {
      ++bad_runs;
      failed += " " + k.name;
    }
  }
  Outcome o;
  o.pass = bad_profiles == 0 && bad_runs == 0 && !g_runs.empty();
  o.detail = "profile_max_ratio=" + fmt(worst) + " runs_checked=" + std::to_string(g_runs.size()) +
             " failing_runs=" + std::to_string(bad_runs) + failed;
  return o;
}

Outcome criterion10() {
  RunConfig c = preset_config("coupled-small");
  c.t_end = 1.0;
  c.deterministic = true;
  const ValidatedConfig vc = validate_config(c);
  std::vector<std::string> hashes;
  for (const char* threads : {"1", "1", "2"}) {
    setenv("VNS_THREADS", threads, 1);
    const fs::path dir = fs::temp_directory_path() / ("vns_acceptance_det_" + std::to_string(hashes.size()));
    fs::remove_all(dir);
    run_to_directory(vc, dir.string());
    hashes.push_back(file_hash((dir / "diagnostics.csv").string()));
    fs::remove_all(dir);
  }
  unsetenv("VNS_THREADS");
  Outcome o;
  o.pass = hashes[0] == hashes[1] && hashes[0] == hashes[2];
  o.detail = "fnv1a64=" + hashes[0] + "," + hashes[1] + "," + hashes[2];
  return o;
}

}  // namespace

int main() {
  const std::vector<std::function<Outcome()>> criteria = {
      criterion1, criterion2, criterion3, criterion4, criterion5,
      criterion6, criterion7, criterion8, criterion9, criterion10};
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i]();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    if (!o.pass) ++failures;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << (i + 1) << ": " << o.detail << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
