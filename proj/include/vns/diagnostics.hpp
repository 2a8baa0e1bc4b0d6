#pragma once

#include "vns/characteristics.hpp"
#include "vns/core.hpp"
#include "vns/fluid.hpp"
#include "vns/kinetic.hpp"

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace vns {

struct DiagContext {
  Domain domain;
  GridDims grid;
  double g = 1.0;
  std::vector<double> moment_orders = {0.0, 1.0, 2.0, 3.0, 6.0};
  double f0_sup = 0.0;     // ||f0||_inf
  double nq_order = 6.0;   // q for the measured N_q(f(t))
  double interp_k = 2.0;   // moment interpolation check (k, ell)
  double interp_ell = 0.0;
  double interp_constant = 0.0;  // C_{k,ell}; 0 disables the check
  bool deterministic = true;
};

/// One diagnostic sample. Instantaneous quantities are filled by
/// compute_step_diagnostics; the time integrals (budgets, residuals) by the
/// run loop, which accumulates them every step.
struct DiagRow {
  double t = 0.0;
  double E = 0.0;
  double D = 0.0;
  double D_G = 0.0;
  std::map<double, double> M;  // M_alpha
  double rho_sup = 0.0;
  double rho_L1 = 0.0, rho_L2 = 0.0, rho_L3 = 0.0, rho_Linf = 0.0;
  double j_L1 = 0.0;
  double brinkman_L2 = 0.0, brinkman_L3 = 0.0;
  double holder_rhs_2 = 0.0, holder_rhs_3 = 0.0;
  double u_L2 = 0.0, u_Linf = 0.0, grad_u_Linf = 0.0, grad_u_L2 = 0.0;
  double budget_u = 0.0, budget_grad = 0.0;
  double strong_time_lhs = 0.0;
  double alive_mass = 0.0;
  double alive_count = 0.0;
  double kinetic_energy = 0.0;  // 1/2 sum w |v|^2
  double fluid_energy = 0.0;    // 1/2 ||u||^2
  double drag_dissipation = 0.0;
  double gravity_power = 0.0;   // sum w G . v
  double energy_residual = 0.0;  // E(t) - E(0) + int D - int G.j
  double exit_energy = 0.0;      // kinetic energy carried out by absorbed particles so far
  double j_L1_time = 0.0;        // int_0^t ||j||_L1
  double gronwall_envelope = 0.0;
  double j_time_envelope = 0.0;
  double pointwise_max = 0.0;  // max e^{3t} f0_value over alive particles
  double pointwise_cap = 0.0;  // e^{3t} ||f0||_inf
  double nq_measured = 0.0;    // max (1 + |v|^q) e^{3t} f0_value
  double interp_violation_fraction = 0.0;
  double interp_max_ratio = 0.0;
  double top_energy_fraction = 0.0;  // fluid energy share above 0.7 Zmax
  double top_particles = 0.0;  // alive particles with x3 >= 0.9 Zmax
};

/// Series plus column layout for CSV output.
struct DiagnosticsSeries {
  std::vector<double> moment_orders;
  std::vector<DiagRow> rows;

  std::vector<std::string> columns() const;
  std::vector<double> values(const DiagRow& r) const;
  std::vector<double> column(const std::string& name) const;
  std::vector<double> times() const;
};

/// Instantaneous diagnostics. `field` may be null (no fluid); `u` is the
/// velocity seen by the particles.
DiagRow compute_step_diagnostics(const ParticleEnsemble& ens, const FluidField* field,
                                 const VelocitySampler& u, double t, const DiagContext& ctx);

/// Kinetic-side energy terms only: returns {E_kin, sum w |u(x)-v|^2, sum w G.v}.
struct KineticEnergyTerms {
  double kinetic = 0.0;
  double drag = 0.0;
  double gravity_power = 0.0;
  double j_L1 = 0.0;  // sum w |v| (particle estimate of ||j||_L1 upper bound)
};
KineticEnergyTerms kinetic_energy_terms(const ParticleEnsemble& ens, const VelocitySampler& u,
                                        double t, double g);

struct DecayFit {
  double t_lo = 0.0;
  double t_hi = 0.0;
  double exponent = 0.0;
  double envelope_constant = 0.0;
  double residual = 0.0;  // RMS of log residuals
  bool super_polynomial = false;
  double slope_first_half = 0.0;
  double slope_second_half = 0.0;
  long points = 0;
};

/// Least-squares slope of log q against log(1 + t) on [t_lo, t_hi].
DecayFit fit_decay(const std::vector<double>& t, const std::vector<double>& q, double t_lo,
                   double t_hi);
DecayFit fit_decay(const DiagnosticsSeries& s, const std::string& quantity, double t_lo,
                   double t_hi);

/// First sampled time with zero alive mass.
std::optional<double> extinction_time(const DiagnosticsSeries& s);

struct BootstrapReport {
  bool holds = true;
  std::optional<double> first_violation;
  double used_grad = 0.0;  // max over t >= T0 of int_{T0}^t ||grad u||_inf
  double used_u = 0.0;     // max over t >= T0 of int_{T0}^t ||u||_inf
  double margin_grad = 0.0;
  double margin_u = 0.0;
};

BootstrapReport bootstrap_monitor(const DiagnosticsSeries& s, double delta0, double T0);

/// Energy envelope (sqrt(E0) + g sqrt(M0/2) t)^2 from |int G.j| <= g sqrt(2 M0 E).
double energy_envelope(double E0, double M0, double g, double t);
/// Bound sqrt(2 M0) t sqrt(E0) + g M0 t^2 / 2 on int_0^t ||j||_L1.
double j_time_envelope(double E0, double M0, double g, double t);

/// RFC-4180 CSV.
void write_csv(std::ostream& os, const DiagnosticsSeries& s);
void write_csv(const std::string& path, const DiagnosticsSeries& s);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
  std::vector<double> column(const std::string& name) const;
};
CsvTable read_csv(std::istream& is);
CsvTable read_csv(const std::string& path);

std::string csv_quote(const std::string& field);

}  // namespace vns
