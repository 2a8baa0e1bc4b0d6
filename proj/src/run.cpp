#include "vns/run.hpp"

#include "vns/characteristics.hpp"
#include "vns/egc.hpp"
#include "vns/oracle.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace vns {

const char* code_version() { return "0.1.0"; }

const std::vector<std::string>& known_checks() {
  static const std::vector<std::string> names = {
      "extinction_before_t0", "extinction_before_t0_half", "force_envelope", "mass_monotone",
      "max_principle",        "holder_bound",              "energy_envelope"};
  return names;
}

const std::vector<ExperimentPreset>& presets() {
  static const std::vector<ExperimentPreset> list = {
      {"gravity-box",
       "gravity only, box(1,1) data; all mass absorbed before t0(1,1)",
       {{"mode", "gravity_only"}, {"data", "box"}, {"box_L", "1"}, {"box_R", "1"}, {"g", "1"},
        {"dt", "0.01"}, {"t_end", "3.5"}, {"particle_count", "10000"}, {"grid", "8,8,8"},
        {"diag_every", "10"}},
       {"extinction_before_t0", "mass_monotone", "max_principle", "holder_bound",
        "energy_envelope"}},
      {"decaying-force",
       "fluid only, shear force C(1+t)^{-7/4}; energy envelope from t = 1",
       {{"mode", "fluid_only"}, {"force_C", "1"}, {"force_exponent", "1.75"}, {"dt", "0.01"},
        {"t_end", "100"}, {"grid", "8,8,16"}, {"Zmax", "2"}, {"u0_type", "zero"},
        {"diag_every", "100"}},
       {"force_envelope"}},
      {"coupled-small",
       "coupled system, box(1,1) data and a small shear initial velocity",
       {{"mode", "coupled"}, {"data", "box"}, {"box_L", "1"}, {"box_R", "1"}, {"dt", "0.02"},
        {"t_end", "4"}, {"particle_count", "10000"}, {"grid", "16,16,16"}, {"u0_type", "shear"},
        {"u0_amplitude", "0.1"}, {"diag_every", "5"}},
       {"mass_monotone", "max_principle", "holder_bound", "energy_envelope"}},
      {"prescribed-small",
       "prescribed cellular field with int ||u||_inf = 0.9 kappa_{1/2} over [0, 3.5]",
       {{"mode", "prescribed_field"}, {"data", "box"}, {"box_L", "1"}, {"box_R", "1"},
        {"g", "1"}, {"field_type", "cellular"}, {"field_budget_kind", "u"},
        {"field_budget", "0.9kappa"}, {"field_horizon", "3.5"}, {"dt", "0.01"}, {"t_end", "3.5"},
        {"particle_count", "10000"}, {"grid", "8,8,8"}},
       {"extinction_before_t0_half", "mass_monotone", "max_principle", "holder_bound"}},
      {"poly-decay",
       "gravity only, poly_decay(q=8, m=3) data in a tall slab",
       {{"mode", "gravity_only"}, {"data", "poly_decay"}, {"poly_q", "8"}, {"poly_m", "3"},
        {"poly_Lmax", "16"}, {"Zmax", "32"}, {"dt", "0.05"}, {"t_end", "40"},
        {"particle_count", "200000"}, {"grid", "4,4,32"}, {"diag_every", "4"}},
       {"mass_monotone", "max_principle", "holder_bound", "energy_envelope"}},
  };
  return list;
}

const ExperimentPreset& find_preset(const std::string& name) {
  for (const auto& p : presets())
    if (p.name == name) return p;
  throw Error(Errc::InvalidConfig, "unknown preset '" + name + "'");
}

RunConfig preset_config(const std::string& name) {
  const ExperimentPreset& p = find_preset(name);
  RunConfig cfg = default_config();
  for (const auto& [k, v] : p.overrides) {
    if (k == "field_budget" && v == "0.9kappa") {
      cfg.field.budget = 0.9 * kappa(0.5, cfg.g);
      continue;
    }
    apply_config_key(cfg, k, v);
  }
  return cfg;
}

namespace {

struct Light {
  double E = 0.0, D = 0.0, Gj = 0.0, jl1 = 0.0, sup_u = 0.0, sup_grad = 0.0;
};

}  // namespace

RunResult simulate(const ValidatedConfig& vc) {
  const RunConfig& cfg = vc.cfg;
  const Domain& dom = cfg.domain;
  RunResult res;
  res.series.moment_orders = DiagContext{}.moment_orders;

  const bool kinetic = cfg.mode != Mode::fluid_only;
  const bool fluid = cfg.mode == Mode::coupled || cfg.mode == Mode::fluid_only;
  const InitialDataSpec data = normalize_spec(cfg.data, dom);

  DiagContext ctx;
  ctx.domain = dom;
  ctx.grid = cfg.grid;
  ctx.g = cfg.g;
  ctx.f0_sup = kinetic ? data.c : 0.0;
  ctx.deterministic = cfg.deterministic;
  ctx.interp_constant = oracle::interpolation_constant(ctx.interp_k, ctx.interp_ell);

  ParticleEnsemble& ens = res.ensemble;
  std::optional<PrescribedField> pf;
  std::optional<NsSolver> solver;
  FaceForce unit_force;

  const long n_steps = std::lround(cfg.t_end / cfg.dt);
  const double dt = cfg.dt;

  double int_D = 0.0, int_Gj = 0.0, int_jl1 = 0.0, budget_u = 0.0, budget_grad = 0.0;
  double int_F2 = 0.0, int_F = 0.0, h1_0 = 0.0, exit_energy = 0.0, E0 = 0.0, M0 = 0.0;
  bool t0_sampled = false, extinct_sampled = false;
  long step = 0;

  try {
    if (kinetic) ens = sample_initial(data, dom, cfg.particle_count, cfg.rng_seed);
    M0 = ens.alive_mass();
    if (cfg.mode == Mode::prescribed_field) pf.emplace(cfg.field, dom);
    if (fluid) {
      res.field = initial_field(cfg.u0_type, cfg.u0_amplitude, cfg.grid, dom);
      solver.emplace(cfg.grid, dom, dt);
      h1_0 = l2_norm_sq(*res.field) + grad_norm_sq(*res.field);
    }
    if (cfg.mode == Mode::fluid_only) unit_force = unit_force_profile(cfg.grid, dom);

    auto sampler_at = [&]() -> VelocitySampler {
      if (pf) return pf->sampler();
      if (cfg.mode == Mode::coupled) return field_sampler(*res.field);
      return VelocitySampler::zero();
    };
    auto light_at = [&](double t, const VelocitySampler& u) {
      Light L;
      const KineticEnergyTerms k = kinetic_energy_terms(ens, u, t, cfg.g);
      L.E = k.kinetic;
      L.D = k.drag;
      L.Gj = k.gravity_power;
      L.jl1 = k.j_L1;
      if (fluid) {
        L.E += kinetic_energy(*res.field);
        L.D += grad_norm_sq(*res.field);
        L.sup_u = max_speed(*res.field);
        L.sup_grad = max_grad(*res.field);
      }
      return L;
    };

    VelocitySampler u = sampler_at();
    Light cur = light_at(0.0, u);
    E0 = cur.E;
    res.steps.push_back({0.0, ens.alive_mass(), static_cast<long>(ens.alive_count()),
                         fluid ? l2_norm_sq(*res.field) : 0.0});

    for (step = 0; step <= n_steps; ++step) {
      const double t = step * dt;
      res.t_reached = t;
      const bool at_t0 = !t0_sampled && t >= vc.T0;
      const bool at_extinction = kinetic && !extinct_sampled && ens.particles.empty();
      if (step % cfg.diag_every == 0 || step == n_steps || at_t0 || at_extinction) {
        if (at_t0) t0_sampled = true;
        if (at_extinction) extinct_sampled = true;
        DiagRow row = compute_step_diagnostics(ens, fluid ? &*res.field : nullptr, u, t, ctx);
        if (pf) {
          row.budget_u = pf->budget_u(t);
          row.budget_grad = pf->budget_grad(t);
        } else {
          row.budget_u = budget_u;
          row.budget_grad = budget_grad;
        }
        row.strong_time_lhs = h1_0 + int_F2 + int_F;
        row.energy_residual = row.E - E0 + int_D - int_Gj;
        row.exit_energy = exit_energy;
        row.j_L1_time = int_jl1;
        row.gronwall_envelope = energy_envelope(E0, M0, cfg.g, t);
        row.j_time_envelope = j_time_envelope(E0, M0, cfg.g, t);
        if (row.top_energy_fraction > 0.01 || row.top_particles > 0) {
          ++res.top_flags;
          if (!res.first_top_flag) res.first_top_flag = t;
        }
        res.series.rows.push_back(std::move(row));
      }
      if (step == n_steps) break;

      const std::size_t dead_before = ens.graveyard.size();
      if (kinetic) {
        AdvanceOptions opt;
        opt.g = cfg.g;
        opt.tol_exit = vc.tol_exit;
        opt.gravity_closed_form = cfg.mode == Mode::gravity_only;
        advance_ensemble(ens, t, dt, u, opt);
        for (std::size_t i = dead_before; i < ens.graveyard.size(); ++i) {
          const Particle& p = ens.graveyard[i];
          exit_energy += 0.5 * p.weight * p.state.v.squaredNorm();
        }
      }
      if (fluid) {
        FaceForce F;
        if (cfg.mode == Mode::coupled) {
          const MomentField mom = deposit_moments(ens, cfg.grid, dom, {}, cfg.deterministic);
          F = brinkman_to_faces(build_brinkman(mom, *res.field), *res.field);
        } else {
          const double amp = cfg.force_C * std::pow(1.0 + t, -cfg.force_exponent);
          F.fu = unit_force.fu * amp;
          F.fv = unit_force.fv * amp;
          F.fw = unit_force.fw * amp;
        }
        const double fn = force_l2(*res.field, F);
        int_F2 += dt * fn * fn;
        int_F += dt * fn;
        solver->step(*res.field, &F);
          }

      const double t1 = (step + 1) * dt;
      u = sampler_at();
      const Light nxt = light_at(t1, u);
      int_D += 0.5 * dt * (cur.D + nxt.D);
      int_Gj += 0.5 * dt * (cur.Gj + nxt.Gj);
      int_jl1 += 0.5 * dt * (cur.jl1 + nxt.jl1);
      budget_u += 0.5 * dt * (cur.sup_u + nxt.sup_u);
      budget_grad += 0.5 * dt * (cur.sup_grad + nxt.sup_grad);
      cur = nxt;
      res.steps.push_back({t1, ens.alive_mass(), static_cast<long>(ens.alive_count()),
                           fluid ? l2_norm_sq(*res.field) : 0.0});
    }
  } catch (const Error& e) {
    res.truncated = true;
    res.error = e.what();
    res.error_code = e.code();
  }

  if (kinetic && ens.particles.empty() && !ens.graveyard.empty()) {
    double tmax = 0.0;
    for (const auto& p : ens.graveyard) tmax = std::max(tmax, p.exit_time.value_or(0.0));
    res.extinction_time = tmax;
  }
  return res;
}

std::vector<CheckResult> run_checks(const ValidatedConfig& vc, const RunResult& r,
                                    const std::vector<std::string>& checks) {
  std::vector<CheckResult> out;
  const auto& rows = r.series.rows;
  for (const auto& name : checks) {
    CheckResult c;
    c.name = name;
    std::ostringstream d;
    if (name == "extinction_before_t0" || name == "extinction_before_t0_half") {
      const double bound = vc.t0_data + (name == "extinction_before_t0_half" ? 0.5 : 0.0);
      c.passed = r.extinction_time && *r.extinction_time <= bound;
      d << "extinction=" << (r.extinction_time ? format_double(*r.extinction_time) : "none")
        << " bound=" << format_double(bound);
    } else if (name == "force_envelope") {
      std::size_t i1 = 0;
      while (i1 < r.steps.size() && r.steps[i1].t < 1.0 - 1e-9) ++i1;
      long bad = 0;
      double env = 0.0;
      if (i1 < r.steps.size()) {
        env = r.steps[i1].u_l2_sq * std::pow(2.0, 1.5);
        for (std::size_t i = i1; i < r.steps.size(); ++i)
          if (r.steps[i].u_l2_sq > env * std::pow(1.0 + r.steps[i].t, -1.5)) ++bad;
      }
      c.passed = i1 < r.steps.size() && bad == 0;
      d << "envelope=" << format_double(env) << " violations=" << bad;
    } else if (name == "mass_monotone") {
      long bad = 0;
      for (std::size_t i = 1; i < r.steps.size(); ++i)
        if (r.steps[i].alive_mass > r.steps[i - 1].alive_mass) ++bad;
      c.passed = bad == 0;
      d << "increases=" << bad;
    } else if (name == "max_principle") {
      long bad = 0;
      for (const auto& row : rows)
        if (row.pointwise_max > row.pointwise_cap) ++bad;
      c.passed = bad == 0;
      d << "violations=" << bad;
    } else if (name == "holder_bound") {
      long bad = 0;
      const double rel = vc.tol("holder", 1e-12);
      for (const auto& row : rows) {
        if (row.brinkman_L2 > row.holder_rhs_2 * (1 + rel) + 1e-300) ++bad;
        if (row.brinkman_L3 > row.holder_rhs_3 * (1 + rel) + 1e-300) ++bad;
      }
      c.passed = bad == 0;
      d << "violations=" << bad;
    } else if (name == "energy_envelope") {
      long bad = 0;
      double worst = -kInf;
      const double rel = vc.tol("energy_envelope", 1e-9);
      for (const auto& row : rows) {
        worst = std::max(worst, row.E - row.gronwall_envelope);
        if (row.E > row.gronwall_envelope * (1 + rel)) ++bad;
      }
      c.passed = bad == 0;
      d << "violations=" << bad << " max_excess=" << format_double(worst);
    } else {
      throw Error(Errc::InvalidConfig, "unknown check '" + name + "'");
    }
    c.detail = d.str();
    out.push_back(std::move(c));
  }
  return out;
}

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

namespace {

std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(Errc::IoError, "cannot read '" + path + "'");
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::string hex64(std::uint64_t h) {
  std::ostringstream ss;
  ss << std::hex << std::setw(16) << std::setfill('0') << h;
  return ss.str();
}

void write_steps_csv(const std::string& path, const RunResult& r) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(Errc::IoError, "cannot write '" + path + "'");
  os << "t,alive_mass,alive_count,u_L2_sq\r\n";
  for (const auto& s : r.steps)
    os << format_double(s.t) << ',' << format_double(s.alive_mass) << ',' << s.alive_count << ','
       << format_double(s.u_l2_sq) << "\r\n";
}

}  // namespace

std::string file_hash(const std::string& path) { return hex64(fnv1a64(read_file(path))); }

RunOutputs run_to_directory(const ValidatedConfig& vc, const std::string& out_dir,
                            const std::vector<std::string>& checks) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw Error(Errc::IoError, "cannot create '" + out_dir + "': " + ec.message());

  const auto wall0 = std::chrono::steady_clock::now();
  RunOutputs out;
  out.result = simulate(vc);
  const RunResult& r = out.result;
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - wall0).count();

  auto path = [&](const std::string& name) { return (fs::path(out_dir) / name).string(); };
  bool io_failed = false;
  std::string io_error;
  try {
    {
      std::ofstream os(path("config.txt"), std::ios::binary);
      os << to_config_text(vc.cfg);
      if (!os) throw Error(Errc::IoError, "cannot write config echo");
    }
    out.files.push_back("config.txt");
    write_csv(path("diagnostics.csv"), r.series);
    out.files.push_back("diagnostics.csv");
    write_steps_csv(path("steps.csv"), r);
    out.files.push_back("steps.csv");
    if (vc.cfg.write_snapshots) {
      if (vc.cfg.mode != Mode::fluid_only) {
        write_ensemble_snapshot(path("ensemble.vnse"), r.ensemble);
        out.files.push_back("ensemble.vnse");
      }
      if (r.field) {
        write_field_snapshot(path("field.vnsf"), *r.field);
        out.files.push_back("field.vnsf");
      }
    }
  } catch (const Error& e) {
    io_failed = true;
    io_error = e.what();
  }

  if (!r.truncated && !io_failed) out.checks = run_checks(vc, r, checks);

  nlohmann::ordered_json m;
  m["tool"] = "vns";
  m["code_version"] = code_version();
  m["status"] = (r.truncated || io_failed) ? "TRUNCATED" : "COMPLETE";
  m["truncated"] = r.truncated || io_failed;
  if (r.truncated) {
    m["error"] = r.error;
    m["error_code"] = errc_name(r.error_code);
  }
  if (io_failed) m["io_error"] = io_error;
  m["mode"] = mode_name(vc.cfg.mode);
  m["rng_seed"] = vc.cfg.rng_seed;
  m["deterministic"] = vc.cfg.deterministic;
  m["config_text"] = to_config_text(vc.cfg);
  m["wall_time_s"] = wall;
  m["t_reached"] = r.t_reached;
  m["steps"] = r.steps.empty() ? 0 : r.steps.size() - 1;
  m["T0"] = vc.T0;
  m["t0_data"] = vc.t0_data;
  if (r.extinction_time) m["extinction_time"] = *r.extinction_time;
  m["top_boundary_flags"] = r.top_flags;
  if (r.first_top_flag) m["first_top_flag"] = *r.first_top_flag;
  nlohmann::ordered_json jc = nlohmann::ordered_json::array();
  for (const auto& c : out.checks) jc.push_back({{"name", c.name}, {"passed", c.passed}, {"detail", c.detail}});
  m["checks"] = jc;
  nlohmann::ordered_json jf = nlohmann::ordered_json::array();
  for (const auto& f : out.files) {
    const std::string bytes = read_file(path(f));
    jf.push_back({{"name", f}, {"bytes", bytes.size()}, {"fnv1a64", hex64(fnv1a64(bytes))}});
  }
  m["files"] = jf;
  {
    std::ofstream os(path("manifest.json"), std::ios::binary);
    os << m.dump(2) << "\n";
  }

  if (r.truncated || io_failed) {
    out.exit_code = 1;
  } else {
    out.exit_code = 0;
    for (const auto& c : out.checks)
      if (!c.passed) out.exit_code = 3;
  }
  return out;
}

}  // namespace vns
