#include "vns/core.hpp"
#include "vns/diagnostics.hpp"
#include "vns/egc.hpp"
#include "vns/oracle.hpp"
#include "vns/run.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace {

constexpr int kOk = 0;
constexpr int kRuntime = 1;
constexpr int kUsage = 2;
constexpr int kCheckFailed = 3;

int exit_code_for(vns::Errc c) {
  switch (c) {
    case vns::Errc::InvalidConfig:
    case vns::Errc::UnknownKey:
    case vns::Errc::InvalidDelta0:
    case vns::Errc::InvalidGrid:
    case vns::Errc::InvalidTimeStep:
      return kUsage;
    default:
      return kRuntime;
  }
}

bool has_assignments(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    if (line.find('=') != std::string::npos) return true;
  }
  return false;
}

std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw vns::Error(vns::Errc::IoError, "cannot read '" + path + "'");
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::map<std::string, std::string> parse_assignments(const std::vector<std::string>& args) {
  std::map<std::string, std::string> kv;
  for (const auto& a : args) {
    const auto eq = a.find('=');
    if (eq == std::string::npos)
      throw vns::Error(vns::Errc::InvalidConfig, "expected key=value, got '" + a + "'");
    kv[a.substr(0, eq)] = a.substr(eq + 1);
  }
  return kv;
}

double num(const std::map<std::string, std::string>& kv, const std::string& key, double fallback) {
  auto it = kv.find(key);
  if (it == kv.end()) return fallback;
  try {
    std::size_t pos = 0;
    const double v = std::stod(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument(key);
    return v;
  } catch (const std::exception&) {
    throw vns::Error(vns::Errc::InvalidConfig, "bad number for '" + key + "'");
  }
}

int oracle_command(const std::string& name, const std::vector<std::string>& args) {
  using namespace vns;
  const auto kv = parse_assignments(args);
  const double g = num(kv, "g", 1.0);
  double value = 0.0;
  if (name == "interpolation_constant") {
    value = oracle::interpolation_constant(num(kv, "k", 2.0), num(kv, "l", 0.0));
  } else if (name == "interpolation_ratio_indicator") {
    value = oracle::interpolation_ratio_indicator(num(kv, "k", 2.0), num(kv, "l", 0.0));
  } else if (name == "moment_quadrature") {
    InitialDataSpec s;
    const auto fam = kv.count("family") ? kv.at("family") : std::string("box");
    if (fam == "box") {
      s.family = DataFamily::box;
    } else if (fam == "poly_decay") {
      s.family = DataFamily::poly_decay;
    } else {
      throw Error(Errc::InvalidConfig, "unknown family '" + fam + "'");
    }
    s.L = num(kv, "L", 1.0);
    s.R = num(kv, "R", 1.0);
    s.c = num(kv, "c", 1.0);
    s.q = num(kv, "q", 8.0);
    s.m = num(kv, "m", 3.0);
    s.Rmax = num(kv, "Rmax", kInf);
    s.Lmax = num(kv, "Lmax", kInf);
    s.normalized = num(kv, "normalized", 1.0) != 0.0;
    Domain d;
    d.Lx = num(kv, "Lx", d.Lx);
    d.Ly = num(kv, "Ly", d.Ly);
    d.Zmax = num(kv, "Zmax", kInf);
    value = oracle::moment_quadrature(s, d, num(kv, "alpha", 0.0));
  } else if (name == "exit_time") {
    value = oracle::reference_exit_time(num(kv, "x3", 2.0), num(kv, "v3", 0.0), g);
  } else if (name == "gronwall") {
    value = oracle::sublinear_gronwall_constant(num(kv, "y0", 1.0), num(kv, "h", g),
                                                num(kv, "beta", 0.5), num(kv, "t", 1.0));
  } else if (name == "diffusion_eigenvalue") {
    value = oracle::diffusion_eigenvalue(static_cast<int>(num(kv, "Nz", 16)), num(kv, "Zmax", 2.0));
  } else if (name == "t0") {
    value = t0(num(kv, "L", 1.0), num(kv, "R", 1.0), g);
  } else if (name == "kappa") {
    value = kappa(num(kv, "alpha", 0.5), g);
  } else if (name == "corner_sup") {
    value = gravity_corner_sup(num(kv, "L", 1.0), num(kv, "R", 1.0), g);
  } else {
    std::cerr << "unknown oracle '" << name << "'; known: interpolation_constant, "
              << "interpolation_ratio_indicator, moment_quadrature, exit_time, gronwall, "
              << "diffusion_eigenvalue, t0, kappa, corner_sup\n";
    return kUsage;
  }
  std::cout << format_double(value) << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Vlasov-Navier-Stokes half-space simulator"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "run a simulation and write CSV, snapshots and manifest");
  std::string config_path, preset, manifest_path, out_dir;
  std::vector<std::string> sets, checks;
  bool no_checks = false;
  run->add_option("--config", config_path, "flat key=value configuration file");
  run->add_option("--preset", preset, "named experiment preset");
  run->add_option("--manifest", manifest_path, "re-run the configuration echoed in a manifest");
  run->add_option("--out", out_dir, "output directory")->required();
  run->add_option("--set", sets, "override key=value (repeatable)");
  run->add_option("--check", checks, "post-hoc check (repeatable; default: the preset's list)");
  run->add_flag("--no-checks", no_checks, "skip post-hoc checks");

  auto* list = app.add_subcommand("presets", "list experiment presets");

  auto* egc = app.add_subcommand("egc-check", "sample the exit geometric condition");
  double eL = 1.0, eR = 1.0, eT = 3.0, eg = 1.0, ebudget = 0.0, ehorizon = vns::kInf, edt = 1e-2;
  long esamples = 100000;
  std::uint64_t eseed = 1;
  std::string emode = "gravity_only", ekind = "u";
  egc->add_option("--L", eL);
  egc->add_option("--R", eR);
  egc->add_option("--T", eT);
  egc->add_option("--g", eg);
  egc->add_option("--samples", esamples);
  egc->add_option("--seed", eseed);
  egc->add_option("--mode", emode, "gravity_only | prescribed_field");
  egc->add_option("--budget", ebudget, "prescribed field budget");
  egc->add_option("--budget-kind", ekind, "u | grad");
  egc->add_option("--horizon", ehorizon);
  egc->add_option("--dt", edt, "substep for the prescribed field");

  auto* fit = app.add_subcommand("decay-fit", "fit a power law to a CSV column");
  std::string csv_path, column;
  double t_lo = 0.0, t_hi = 0.0;
  fit->add_option("csv", csv_path)->required();
  fit->add_option("column", column)->required();
  fit->add_option("t_lo", t_lo)->required();
  fit->add_option("t_hi", t_hi)->required();

  auto* orc = app.add_subcommand("oracle", "print an oracle value");
  std::string oracle_name;
  std::vector<std::string> oracle_args;
  orc->add_option("name", oracle_name)->required();
  orc->add_option("params", oracle_args, "key=value parameters");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*list) {
      for (const auto& p : vns::presets()) {
        std::cout << p.name << "\t" << p.description << "\n";
      }
      return kOk;
    }
    if (*run) {
      const int sources = !config_path.empty() + !preset.empty() + !manifest_path.empty();
      if (sources != 1) {
        std::cerr << "run: give exactly one of --config, --preset, --manifest\n";
        return kUsage;
      }
      vns::RunConfig cfg;
      std::vector<std::string> run_checks = checks;
      if (!preset.empty()) {
        cfg = vns::preset_config(preset);
        if (run_checks.empty()) run_checks = vns::find_preset(preset).checks;
      } else {
        std::string text;
        if (!config_path.empty()) {
          text = slurp(config_path);
        } else {
          const auto m = nlohmann::json::parse(slurp(manifest_path));
          text = m.at("config_text").get<std::string>();
        }
        if (!has_assignments(text)) {
          std::cerr << "run: configuration is empty\n";
          return kUsage;
        }
        cfg = vns::parse_config_string(text);
      }
      for (const auto& s : sets) {
        const auto eq = s.find('=');
        if (eq == std::string::npos) {
          std::cerr << "run: --set expects key=value\n";
          return kUsage;
        }
        vns::apply_config_key(cfg, s.substr(0, eq), s.substr(eq + 1));
      }
      if (no_checks) run_checks.clear();
      const vns::ValidatedConfig vc = vns::validate_config(cfg);
      const vns::RunOutputs out = vns::run_to_directory(vc, out_dir, run_checks);
      if (out.result.truncated) std::cerr << "run stopped: " << out.result.error << "\n";
      for (const auto& c : out.checks)
        std::cout << (c.passed ? "PASS " : "FAIL ") << c.name << " " << c.detail << "\n";
      if (out.result.truncated) return exit_code_for(out.result.error_code);
      return out.exit_code;
    }
    if (*egc) {
      vns::EgcQuery q{eL, eR, eT};
      vns::EgcOptions opt;
      opt.g = eg;
      opt.dt = edt;
      vns::Mode mode = vns::parse_mode(emode);
      vns::VelocitySampler u;
      if (mode == vns::Mode::prescribed_field) {
        vns::PrescribedFieldSpec fs;
        fs.budget = ebudget;
        fs.budget_kind = ekind;
        fs.horizon = ehorizon;
        u = vns::PrescribedField(fs, opt.domain).sampler();
      } else if (mode != vns::Mode::gravity_only) {
        std::cerr << "egc-check: mode must be gravity_only or prescribed_field\n";
        return kUsage;
      }
      const vns::EgcReport r = vns::verify_egc(q, mode, u, esamples, eseed, opt);
      std::cout << (r.satisfied ? 1 : 0) << ',' << vns::format_double(r.max_exit_time) << ','
                << vns::format_double(r.margin) << ',' << r.sample_count << ','
                << vns::format_double(r.budget_used) << ',' << r.unexited << "\n";
      return r.satisfied ? kOk : kCheckFailed;
    }
    if (*fit) {
      const vns::CsvTable tab = vns::read_csv(csv_path);
      const vns::DecayFit f = vns::fit_decay(tab.column("t"), tab.column(column), t_lo, t_hi);
      std::cout << vns::format_double(f.exponent) << ',' << vns::format_double(f.envelope_constant)
                << ',' << vns::format_double(f.residual) << "\n";
      return kOk;
    }
    if (*orc) return oracle_command(oracle_name, oracle_args);
  } catch (const vns::Error& e) {
    std::cerr << "error [" << vns::errc_name(e.code()) << "]: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntime;
  }
  return kUsage;
}
