#include "vns/core.hpp"

#include "vns/egc.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <vector>

namespace vns {

const char* errc_name(Errc code) {
  switch (code) {
    case Errc::InvalidDelta0: return "InvalidDelta0";
    case Errc::InvalidGrid: return "InvalidGrid";
    case Errc::InvalidTimeStep: return "InvalidTimeStep";
    case Errc::InvalidConfig: return "InvalidConfig";
    case Errc::UnknownKey: return "UnknownKey";
    case Errc::NonFiniteField: return "NonFiniteField";
    case Errc::FieldHistoryUnavailable: return "FieldHistoryUnavailable";
    case Errc::SingularDifference: return "SingularDifference";
    case Errc::DeadParticle: return "DeadParticle";
    case Errc::UnnormalizableSpec: return "UnnormalizableSpec";
    case Errc::DivergentFunctional: return "DivergentFunctional";
    case Errc::DivergentIntegral: return "DivergentIntegral";
    case Errc::GridMismatch: return "GridMismatch";
    case Errc::CflViolation: return "CflViolation";
    case Errc::SolverDivergence: return "SolverDivergence";
    case Errc::DomainError: return "DomainError";
    case Errc::ExponentViolation: return "ExponentViolation";
    case Errc::NonPositiveData: return "NonPositiveData";
    case Errc::MissingColumn: return "MissingColumn";
    case Errc::IoError: return "IoError";
  }
  return "Unknown";
}

Error::Error(Errc code, const std::string& what)
    : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

const char* mode_name(Mode m) {
  switch (m) {
    case Mode::gravity_only: return "gravity_only";
    case Mode::prescribed_field: return "prescribed_field";
    case Mode::coupled: return "coupled";
    case Mode::fluid_only: return "fluid_only";
  }
  return "?";
}

Mode parse_mode(const std::string& s) {
  if (s == "gravity_only") return Mode::gravity_only;
  if (s == "prescribed_field") return Mode::prescribed_field;
  if (s == "coupled") return Mode::coupled;
  if (s == "fluid_only") return Mode::fluid_only;
  throw Error(Errc::InvalidConfig, "unknown mode '" + s + "'");
}

double ValidatedConfig::tol(const std::string& name, double fallback) const {
  auto it = cfg.tolerances.find(name);
  return it == cfg.tolerances.end() ? fallback : it->second;
}

double default_delta0(double g) { return std::min(0.1, 0.9 * kappa(0.5, g)); }

RunConfig default_config() { return RunConfig{}; }

namespace {

bool finite_positive(double x) { return std::isfinite(x) && x > 0.0; }

bool has_particles(Mode m) { return m != Mode::fluid_only; }

}  // namespace

ValidatedConfig validate_config(const RunConfig& in) {
  RunConfig cfg = in;
  if (!finite_positive(cfg.g)) throw Error(Errc::InvalidConfig, "g must be positive");
  if (!finite_positive(cfg.dt)) throw Error(Errc::InvalidTimeStep, "dt must be positive and finite");
  if (!std::isfinite(cfg.t_end) || cfg.t_end < 0.0)
    throw Error(Errc::InvalidTimeStep, "t_end must be finite and non-negative");
  if (cfg.grid.Nx < 4 || cfg.grid.Ny < 4 || cfg.grid.Nz < 4)
    throw Error(Errc::InvalidGrid, "grid dimensions must be >= 4");
  if (!finite_positive(cfg.domain.Lx) || !finite_positive(cfg.domain.Ly) ||
      !finite_positive(cfg.domain.Zmax))
    throw Error(Errc::InvalidConfig, "domain extents must be positive");
  if (cfg.diag_every < 1) throw Error(Errc::InvalidConfig, "diag_every must be >= 1");
  if (cfg.particle_count < 0) throw Error(Errc::InvalidConfig, "particle_count must be >= 0");
  if (has_particles(cfg.mode) && cfg.particle_count < 1)
    throw Error(Errc::InvalidConfig, "particle modes need particle_count >= 1");

  if (std::isnan(cfg.delta0)) cfg.delta0 = default_delta0(cfg.g);
  const double kh = kappa(0.5, cfg.g);
  if (!(cfg.delta0 > 0.0)) throw Error(Errc::InvalidDelta0, "delta0 must be strictly positive");
  if (!(cfg.delta0 * std::exp(cfg.delta0) < 1.0 / 9.0))
    throw Error(Errc::InvalidDelta0, "delta0 * exp(delta0) must be < 1/9");
  if (!(cfg.delta0 < kh)) throw Error(Errc::InvalidDelta0, "delta0 must be < kappa_{1/2}(g)");

  const auto& d = cfg.data;
  if (d.family == DataFamily::box) {
    if (!finite_positive(d.L) || !finite_positive(d.R))
      throw Error(Errc::InvalidConfig, "box data needs L, R > 0");
    if (has_particles(cfg.mode) && d.L > cfg.domain.Zmax)
      throw Error(Errc::InvalidConfig, "box support exceeds Zmax");
  } else {
    if (!(d.Rmax > 0.0) || !(d.Lmax > 0.0))
      throw Error(Errc::InvalidConfig, "poly_decay truncations must be positive");
    if (has_particles(cfg.mode) && d.Lmax > cfg.domain.Zmax)
      throw Error(Errc::InvalidConfig, "poly_decay needs Lmax <= Zmax to be sampled in the slab");
  }

  ValidatedConfig vc;
  vc.cfg = cfg;
  vc.kappa_half = kh;
  vc.t0_unit = t0(1.0, 1.0, cfg.g);
  vc.T0 = vc.t0_unit + 1.0;
  vc.t0_data = d.family == DataFamily::box ? t0(d.L, d.R, cfg.g)
                                           : std::numeric_limits<double>::quiet_NaN();
  vc.tol_exit = 1e-10 * cfg.domain.Zmax;
  return vc;
}

ValidatedConfig validate_config(const ValidatedConfig& vc) { return validate_config(vc.cfg); }

std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  const std::string t = trim(v);
  if (t == "inf" || t == "+inf") return kInf;
  if (t == "-inf") return -kInf;
  if (t == "nan" || t == "default") return std::numeric_limits<double>::quiet_NaN();
  double out = 0.0;
  auto res = std::from_chars(t.data(), t.data() + t.size(), out);
  if (res.ec != std::errc() || res.ptr != t.data() + t.size())
    throw Error(Errc::InvalidConfig, "key '" + key + "': not a number: '" + v + "'");
  return out;
}

long to_long(const std::string& key, const std::string& v) {
  const std::string t = trim(v);
  long out = 0;
  auto res = std::from_chars(t.data(), t.data() + t.size(), out);
  if (res.ec != std::errc() || res.ptr != t.data() + t.size())
    throw Error(Errc::InvalidConfig, "key '" + key + "': not an integer: '" + v + "'");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  const std::string t = trim(v);
  if (t == "1" || t == "true" || t == "yes" || t == "on") return true;
  if (t == "0" || t == "false" || t == "no" || t == "off") return false;
  throw Error(Errc::InvalidConfig, "key '" + key + "': not a boolean: '" + v + "'");
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) out.push_back(trim(cur));
  return out;
}

}  // namespace

void apply_config_key(RunConfig& c, const std::string& key, const std::string& value) {
  const std::string v = trim(value);
  if (key == "g") c.g = to_double(key, v);
  else if (key == "dt") c.dt = to_double(key, v);
  else if (key == "t_end") c.t_end = to_double(key, v);
  else if (key == "particle_count") c.particle_count = to_long(key, v);
  else if (key == "grid") {
    auto parts = split(v, ',');
    if (parts.size() != 3) throw Error(Errc::InvalidGrid, "grid needs three integers Nx,Ny,Nz");
    c.grid.Nx = static_cast<int>(to_long(key, parts[0]));
    c.grid.Ny = static_cast<int>(to_long(key, parts[1]));
    c.grid.Nz = static_cast<int>(to_long(key, parts[2]));
  } else if (key == "rng_seed") c.rng_seed = static_cast<std::uint64_t>(to_long(key, v));
  else if (key == "delta0") c.delta0 = to_double(key, v);
  else if (key == "mode") c.mode = parse_mode(v);
  else if (key == "tolerances") {
    c.tolerances.clear();
    if (!v.empty()) {
      for (const auto& item : split(v, ',')) {
        const auto colon = item.find(':');
        if (colon == std::string::npos)
          throw Error(Errc::InvalidConfig, "tolerances entries are name:value");
        c.tolerances[trim(item.substr(0, colon))] = to_double(key, item.substr(colon + 1));
      }
    }
  } else if (key == "Lx") c.domain.Lx = to_double(key, v);
  else if (key == "Ly") c.domain.Ly = to_double(key, v);
  else if (key == "Zmax") c.domain.Zmax = to_double(key, v);
  else if (key == "data") {
    if (v == "box") c.data.family = DataFamily::box;
    else if (v == "poly_decay") c.data.family = DataFamily::poly_decay;
    else throw Error(Errc::InvalidConfig, "unknown data family '" + v + "'");
  } else if (key == "box_L") c.data.L = to_double(key, v);
  else if (key == "box_R") c.data.R = to_double(key, v);
  else if (key == "data_c") c.data.c = to_double(key, v);
  else if (key == "poly_q") c.data.q = to_double(key, v);
  else if (key == "poly_m") c.data.m = to_double(key, v);
  else if (key == "poly_Rmax") c.data.Rmax = to_double(key, v);
  else if (key == "poly_Lmax") c.data.Lmax = to_double(key, v);
  else if (key == "normalized") c.data.normalized = to_bool(key, v);
  else if (key == "field_type") c.field.type = v;
  else if (key == "field_amplitude") c.field.amplitude = to_double(key, v);
  else if (key == "field_budget") c.field.budget = to_double(key, v);
  else if (key == "field_budget_kind") c.field.budget_kind = v;
  else if (key == "field_horizon") c.field.horizon = to_double(key, v);
  else if (key == "field_wavenumber") c.field.wavenumber = static_cast<int>(to_long(key, v));
  else if (key == "field_uniform") {
    auto parts = split(v, ',');
    if (parts.size() != 3) throw Error(Errc::InvalidConfig, "field_uniform needs three numbers");
    for (int i = 0; i < 3; ++i) c.field.uniform[i] = to_double(key, parts[i]);
  } else if (key == "u0_type") c.u0_type = v;
  else if (key == "u0_amplitude") c.u0_amplitude = to_double(key, v);
  else if (key == "force_C") c.force_C = to_double(key, v);
  else if (key == "force_exponent") c.force_exponent = to_double(key, v);
  else if (key == "diag_every") c.diag_every = static_cast<int>(to_long(key, v));
  else if (key == "deterministic") c.deterministic = to_bool(key, v);
  else if (key == "write_snapshots") c.write_snapshots = to_bool(key, v);
  else throw Error(Errc::UnknownKey, "unknown config key '" + key + "'");
}

RunConfig parse_config(std::istream& in) {
  RunConfig c;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw Error(Errc::InvalidConfig, "line " + std::to_string(lineno) + ": expected key=value");
    apply_config_key(c, trim(line.substr(0, eq)), line.substr(eq + 1));
  }
  return c;
}

RunConfig parse_config_string(const std::string& text) {
  std::istringstream is(text);
  return parse_config(is);
}

RunConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error(Errc::IoError, "cannot read config '" + path + "'");
  return parse_config(f);
}

std::string to_config_text(const RunConfig& c) {
  std::ostringstream os;
  auto kv = [&](const char* k, const std::string& v) { os << k << '=' << v << '\n'; };
  auto num = [&](const char* k, double v) { kv(k, format_double(v)); };
  num("g", c.g);
  num("dt", c.dt);
  num("t_end", c.t_end);
  kv("particle_count", std::to_string(c.particle_count));
  kv("grid", std::to_string(c.grid.Nx) + "," + std::to_string(c.grid.Ny) + "," +
                 std::to_string(c.grid.Nz));
  kv("rng_seed", std::to_string(c.rng_seed));
  num("delta0", c.delta0);
  kv("mode", mode_name(c.mode));
  std::string tol;
  for (const auto& [k, v] : c.tolerances) {
    if (!tol.empty()) tol += ',';
    tol += k + ":" + format_double(v);
  }
  kv("tolerances", tol);
  num("Lx", c.domain.Lx);
  num("Ly", c.domain.Ly);
  num("Zmax", c.domain.Zmax);
  kv("data", c.data.family == DataFamily::box ? "box" : "poly_decay");
  num("box_L", c.data.L);
  num("box_R", c.data.R);
  num("data_c", c.data.c);
  num("poly_q", c.data.q);
  num("poly_m", c.data.m);
  num("poly_Rmax", c.data.Rmax);
  num("poly_Lmax", c.data.Lmax);
  kv("normalized", c.data.normalized ? "true" : "false");
  kv("field_type", c.field.type);
  num("field_amplitude", c.field.amplitude);
  num("field_budget", c.field.budget);
  kv("field_budget_kind", c.field.budget_kind);
  num("field_horizon", c.field.horizon);
  kv("field_wavenumber", std::to_string(c.field.wavenumber));
  kv("field_uniform", format_double(c.field.uniform[0]) + "," + format_double(c.field.uniform[1]) +
                          "," + format_double(c.field.uniform[2]));
  kv("u0_type", c.u0_type);
  num("u0_amplitude", c.u0_amplitude);
  num("force_C", c.force_C);
  num("force_exponent", c.force_exponent);
  kv("diag_every", std::to_string(c.diag_every));
  kv("deterministic", c.deterministic ? "true" : "false");
  kv("write_snapshots", c.write_snapshots ? "true" : "false");
  return os.str();
}

}  // namespace vns
