#include "vns/diagnostics.hpp"

#include "vns/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <cstdlib>
#include <utility>

namespace vns {

namespace {

// Fixed partition so particle sums do not depend on the worker count.
constexpr int kReductionChunks = 16;

using Member = double DiagRow::*;

struct NamedColumn {
  const char* name;
  Member member;
};

const std::vector<NamedColumn>& leading_columns() {
  static const std::vector<NamedColumn> cols = {
      {"t", &DiagRow::t}, {"E", &DiagRow::E}, {"D", &DiagRow::D}, {"D_G", &DiagRow::D_G}};
  return cols;
}

const std::vector<NamedColumn>& trailing_columns() {
  static const std::vector<NamedColumn> cols = {
      {"rho_sup", &DiagRow::rho_sup},
      {"rho_L1", &DiagRow::rho_L1},
      {"rho_L2", &DiagRow::rho_L2},
      {"rho_L3", &DiagRow::rho_L3},
      {"rho_Linf", &DiagRow::rho_Linf},
      {"j_L1", &DiagRow::j_L1},
      {"brinkman_L2", &DiagRow::brinkman_L2},
      {"brinkman_L3", &DiagRow::brinkman_L3},
      {"u_L2", &DiagRow::u_L2},
      {"u_Linf", &DiagRow::u_Linf},
      {"grad_u_Linf", &DiagRow::grad_u_Linf},
      {"budget_u", &DiagRow::budget_u},
      {"budget_grad", &DiagRow::budget_grad},
      {"strong_time_lhs", &DiagRow::strong_time_lhs},
      {"alive_mass", &DiagRow::alive_mass},
      {"alive_count", &DiagRow::alive_count},
      {"grad_u_L2", &DiagRow::grad_u_L2},
      {"kinetic_energy", &DiagRow::kinetic_energy},
      {"fluid_energy", &DiagRow::fluid_energy},
      {"drag_dissipation", &DiagRow::drag_dissipation},
      {"gravity_power", &DiagRow::gravity_power},
      {"energy_residual", &DiagRow::energy_residual},
      {"exit_energy", &DiagRow::exit_energy},
      {"j_L1_time", &DiagRow::j_L1_time},
      {"gronwall_envelope", &DiagRow::gronwall_envelope},
      {"j_time_envelope", &DiagRow::j_time_envelope},
      {"holder_rhs_2", &DiagRow::holder_rhs_2},
      {"holder_rhs_3", &DiagRow::holder_rhs_3},
      {"pointwise_max", &DiagRow::pointwise_max},
      {"pointwise_cap", &DiagRow::pointwise_cap},
      {"nq_measured", &DiagRow::nq_measured},
      {"interp_violation_fraction", &DiagRow::interp_violation_fraction},
      {"interp_max_ratio", &DiagRow::interp_max_ratio},
      {"top_energy_fraction", &DiagRow::top_energy_fraction},
      {"top_particles", &DiagRow::top_particles},
  };
  return cols;
}

std::string moment_column(double alpha) { return "M_" + format_double(alpha); }

struct KineticSums {
  double kinetic = 0.0, drag = 0.0, gravity = 0.0, j_l1 = 0.0;
  std::vector<double> moments;
  double pointwise_max = 0.0, nq = 0.0;
  long top = 0;
  bool used = false;
};

KineticSums kinetic_sums(const ParticleEnsemble& ens, const VelocitySampler& u, double t,
                         double g, const std::vector<double>& orders, double nq_order,
                         double z_top) {
  const auto& ps = ens.particles;
  std::vector<KineticSums> part(kReductionChunks);
  const double amp = std::exp(3.0 * t);
  parallel_chunks(
      ps.size(),
      [&](int c, std::size_t b, std::size_t e) {
        KineticSums& s = part[c];
        s.moments.assign(orders.size(), 0.0);
        s.used = true;
        for (std::size_t n = b; n < e; ++n) {
          const Particle& p = ps[n];
          const Vec3& v = p.state.v;
          const double w = p.weight;
          const double speed = v.norm();
          s.kinetic += 0.5 * w * v.squaredNorm();
          s.drag += w * (u(t, p.state.x) - v).squaredNorm();
          s.gravity += w * gravity(g).dot(v);
          s.j_l1 += w * speed;
          for (std::size_t a = 0; a < orders.size(); ++a) s.moments[a] += w * std::pow(speed, orders[a]);
          const double val = amp * p.f0_value;
          s.pointwise_max = std::max(s.pointwise_max, val);
          s.nq = std::max(s.nq, (1.0 + std::pow(speed, nq_order)) * val);
          if (p.state.x[2] >= z_top) ++s.top;
        }
      },
      kReductionChunks);
  KineticSums tot;
  tot.moments.assign(orders.size(), 0.0);
  for (const auto& s : part) {
    if (!s.used) continue;
    tot.kinetic += s.kinetic;
    tot.drag += s.drag;
    tot.gravity += s.gravity;
    tot.j_l1 += s.j_l1;
    for (std::size_t a = 0; a < orders.size(); ++a) tot.moments[a] += s.moments[a];
    tot.pointwise_max = std::max(tot.pointwise_max, s.pointwise_max);
    tot.nq = std::max(tot.nq, s.nq);
    tot.top += s.top;
  }
  return tot;
}

// Cell-centered velocity of the field, or of the sampler at cell centers.
std::array<GridArray, 3> center_velocity(const FluidField* field, const VelocitySampler& u,
                                         double t, const GridDims& grid, const Domain& domain) {
  if (field) return cell_centered_velocity(*field);
  std::array<GridArray, 3> uc;
  for (auto& a : uc) a = GridArray::Zero(grid.cells());
  if (u.is_zero()) return uc;
  const double hx = domain.Lx / grid.Nx, hy = domain.Ly / grid.Ny, hz = domain.Zmax / grid.Nz;
  for (int k = 0; k < grid.Nz; ++k)
    for (int j = 0; j < grid.Ny; ++j)
      for (int i = 0; i < grid.Nx; ++i) {
        const Vec3 x((i + 0.5) * hx, (j + 0.5) * hy, (k + 0.5) * hz);
        const Vec3 val = u(t, x);
        const long c = cell_index(grid, i, j, k);
        for (int d = 0; d < 3; ++d) uc[d][c] = val[d];
      }
  return uc;
}

// Sum_i w_i Sum_c S_ic |v_i - u_c|^p for p = 2, 3.
std::array<double, 2> holder_sums(const ParticleEnsemble& ens, const std::array<GridArray, 3>& uc,
                                  const GridDims& grid, const Domain& domain) {
  const auto& ps = ens.particles;
  std::vector<std::array<double, 2>> part(kReductionChunks, {0.0, 0.0});
  parallel_chunks(
      ps.size(),
      [&](int c, std::size_t b, std::size_t e) {
        CicStencil st;
        for (std::size_t n = b; n < e; ++n) {
          const Particle& p = ps[n];
          if (!cic_stencil(grid, domain, p.state.x, st)) continue;
          for (int s = 0; s < 8; ++s) {
            const long cell = st.cell[s];
            const Vec3 d = p.state.v - Vec3(uc[0][cell], uc[1][cell], uc[2][cell]);
            const double r = d.norm();
            const double w = p.weight * st.weight[s];
            part[c][0] += w * r * r;
            part[c][1] += w * r * r * r;
          }
        }
      },
      kReductionChunks);
  std::array<double, 2> tot{0.0, 0.0};
  for (const auto& s : part) {
    tot[0] += s[0];
    tot[1] += s[1];
  }
  return tot;
}

// Nearest-cell check of m_ell <= C h^{(k-ell)/(k+3)} m_k^{(ell+3)/(k+3)}.
std::pair<double, double> interpolation_check(const ParticleEnsemble& ens, double t,
                                              const DiagContext& ctx) {
  if (!(ctx.interp_constant > 0.0) || ens.particles.empty()) return {0.0, 0.0};
  const GridDims& grid = ctx.grid;
  const Domain& dom = ctx.domain;
  const long cells = grid.cells();
  GridArray ml = GridArray::Zero(cells), mk = GridArray::Zero(cells), sup = GridArray::Zero(cells);
  const double hx = dom.Lx / grid.Nx, hy = dom.Ly / grid.Ny, hz = dom.Zmax / grid.Nz;
  const double amp = std::exp(3.0 * t);
  for (const auto& p : ens.particles) {
    const Vec3& x = p.state.x;
    if (!(x[2] > 0.0) || !(x[2] < dom.Zmax)) continue;
    auto wrap = [](double xi, double h, int n) {
      int i = static_cast<int>(std::floor(xi / h));
      i %= n;
      return i < 0 ? i + n : i;
    };
    const int i = wrap(x[0], hx, grid.Nx);
    const int j = wrap(x[1], hy, grid.Ny);
    const int k = std::min(grid.Nz - 1, static_cast<int>(x[2] / hz));
    const long c = cell_index(grid, i, j, k);
    const double speed = p.state.v.norm();
    ml[c] += p.weight * std::pow(speed, ctx.interp_ell);
    mk[c] += p.weight * std::pow(speed, ctx.interp_k);
    sup[c] = std::max(sup[c], amp * p.f0_value);
  }
  const double vol = hx * hy * hz;
  const double a = (ctx.interp_k - ctx.interp_ell) / (ctx.interp_k + 3.0);
  const double b = (ctx.interp_ell + 3.0) / (ctx.interp_k + 3.0);
  long occupied = 0, bad = 0;
  double worst = 0.0;
  for (long c = 0; c < cells; ++c) {
    if (!(ml[c] > 0.0)) continue;
    ++occupied;
    const double rhs = ctx.interp_constant * std::pow(sup[c], a) * std::pow(mk[c] / vol, b);
    const double ratio = rhs > 0.0 ? (ml[c] / vol) / rhs : kInf;
    worst = std::max(worst, ratio);
    if (ratio > 1.0) ++bad;
  }
  return {occupied ? static_cast<double>(bad) / occupied : 0.0, worst};
}

}  // namespace

std::vector<std::string> DiagnosticsSeries::columns() const {
  std::vector<std::string> out;
  for (const auto& c : leading_columns()) out.emplace_back(c.name);
  for (double a : moment_orders) out.push_back(moment_column(a));
  for (const auto& c : trailing_columns()) out.emplace_back(c.name);
  return out;
}

std::vector<double> DiagnosticsSeries::values(const DiagRow& r) const {
  std::vector<double> out;
  for (const auto& c : leading_columns()) out.push_back(r.*(c.member));
  for (double a : moment_orders) {
    auto it = r.M.find(a);
    out.push_back(it == r.M.end() ? std::nan("") : it->second);
  }
  for (const auto& c : trailing_columns()) out.push_back(r.*(c.member));
  return out;
}

std::vector<double> DiagnosticsSeries::column(const std::string& name) const {
  const auto cols = columns();
  const auto it = std::find(cols.begin(), cols.end(), name);
  if (it == cols.end()) throw Error(Errc::MissingColumn, "no column '" + name + "'");
  const std::size_t idx = static_cast<std::size_t>(it - cols.begin());
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(values(r)[idx]);
  return out;
}

std::vector<double> DiagnosticsSeries::times() const {
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(r.t);
  return out;
}

KineticEnergyTerms kinetic_energy_terms(const ParticleEnsemble& ens, const VelocitySampler& u,
                                        double t, double g) {
  const KineticSums s = kinetic_sums(ens, u, t, g, {}, 0.0, kInf);
  return {s.kinetic, s.drag, s.gravity, s.j_l1};
}

DiagRow compute_step_diagnostics(const ParticleEnsemble& ens, const FluidField* field,
                                 const VelocitySampler& u, double t, const DiagContext& ctx) {
  DiagRow r;
  r.t = t;
  const KineticSums ks = kinetic_sums(ens, u, t, ctx.g, ctx.moment_orders, ctx.nq_order,
                                      0.9 * ctx.domain.Zmax);
  r.kinetic_energy = ks.kinetic;
  r.drag_dissipation = ks.drag;
  r.gravity_power = ks.gravity;
  for (std::size_t a = 0; a < ctx.moment_orders.size(); ++a) r.M[ctx.moment_orders[a]] = ks.moments[a];
  r.alive_mass = ens.alive_mass();
  r.alive_count = static_cast<double>(ens.alive_count());
  r.pointwise_max = ks.pointwise_max;
  r.pointwise_cap = std::exp(3.0 * t) * ctx.f0_sup;
  r.nq_measured = ks.nq;
  r.top_particles = static_cast<double>(ks.top);

  double grad_sq = 0.0;
  if (field) {
    r.fluid_energy = kinetic_energy(*field);
    r.u_L2 = std::sqrt(l2_norm_sq(*field));
    grad_sq = grad_norm_sq(*field);
    r.grad_u_L2 = std::sqrt(std::max(0.0, grad_sq));
    r.u_Linf = max_speed(*field);
    r.grad_u_Linf = max_grad(*field);
    r.top_energy_fraction = upper_energy_fraction(*field, 0.7);
  } else if (u.has_sup_norms()) {
    r.u_Linf = u.is_zero() ? 0.0 : u.sup_norm(t);
    r.grad_u_Linf = u.is_zero() ? 0.0 : u.sup_grad(t);
  }
  r.E = r.kinetic_energy + r.fluid_energy;
  r.D = r.drag_dissipation + grad_sq;
  r.D_G = r.D - r.gravity_power;

  const MomentField mom = deposit_moments(ens, ctx.grid, ctx.domain, {}, ctx.deterministic);
  const double vol = mom.cell_volume();
  r.rho_Linf = mom.rho.size() ? mom.rho.maxCoeff() : 0.0;
  r.rho_sup = r.rho_Linf;
  r.rho_L1 = mom.rho.abs().sum() * vol;
  r.rho_L2 = std::sqrt(mom.rho.square().sum() * vol);
  r.rho_L3 = std::cbrt(mom.rho.abs().cube().sum() * vol);
  r.j_L1 = (mom.j[0].square() + mom.j[1].square() + mom.j[2].square()).sqrt().sum() * vol;

  const auto uc = center_velocity(field, u, t, ctx.grid, ctx.domain);
  GridArray Fmag = GridArray::Zero(ctx.grid.cells());
  for (int d = 0; d < 3; ++d) Fmag += (mom.j[d] - mom.rho * uc[d]).square();
  Fmag = Fmag.sqrt();
  r.brinkman_L2 = std::sqrt(Fmag.square().sum() * vol);
  r.brinkman_L3 = std::cbrt(Fmag.cube().sum() * vol);
  const auto hs = holder_sums(ens, uc, ctx.grid, ctx.domain);
  r.holder_rhs_2 = std::sqrt(r.rho_Linf) * std::sqrt(hs[0]);
  r.holder_rhs_3 = std::pow(r.rho_Linf, 2.0 / 3.0) * std::cbrt(hs[1]);

  const auto [frac, worst] = interpolation_check(ens, t, ctx);
  r.interp_violation_fraction = frac;
  r.interp_max_ratio = worst;
  return r;
}

namespace {

std::pair<double, double> least_squares(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
  }
  const double mx = sx / n, my = sy / n;
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  const double slope = sxx > 0.0 ? sxy / sxx : 0.0;
  return {slope, my - slope * mx};
}

}  // namespace

DecayFit fit_decay(const std::vector<double>& t, const std::vector<double>& q, double t_lo,
                   double t_hi) {
  if (t.size() != q.size()) throw Error(Errc::InvalidConfig, "time and value lengths differ");
  if (!(t_lo < t_hi)) throw Error(Errc::DomainError, "fit window needs t_lo < t_hi");
  std::vector<double> x, y, ts;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i] < t_lo || t[i] > t_hi) continue;
    if (!(q[i] > 0.0) || !std::isfinite(q[i]))
      throw Error(Errc::NonPositiveData, "non-positive value at t = " + format_double(t[i]));
    x.push_back(std::log1p(t[i]));
    y.push_back(std::log(q[i]));
    ts.push_back(t[i]);
  }
  if (x.size() < 2) throw Error(Errc::DomainError, "fewer than two samples in the fit window");
  DecayFit f;
  f.t_lo = t_lo;
  f.t_hi = t_hi;
  f.points = static_cast<long>(x.size());
  const auto [slope, icpt] = least_squares(x, y);
  f.exponent = slope;
  double ss = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double e = y[i] - (icpt + slope * x[i]);
    ss += e * e;
    f.envelope_constant = std::max(f.envelope_constant, std::exp(y[i] - slope * x[i]));
  }
  f.residual = std::sqrt(ss / static_cast<double>(x.size()));

  const double mid = 0.5 * (x.front() + x.back());
  std::vector<double> x1, y1, x2, y2;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] <= mid) {
      x1.push_back(x[i]);
      y1.push_back(y[i]);
    } else {
      x2.push_back(x[i]);
      y2.push_back(y[i]);
    }
  }
  if (x1.size() >= 2 && x2.size() >= 2) {
    f.slope_first_half = least_squares(x1, y1).first;
    f.slope_second_half = least_squares(x2, y2).first;
    const double drift = f.slope_second_half - f.slope_first_half;
    f.super_polynomial = drift < -std::max(0.1, 0.1 * std::abs(f.slope_first_half));
  } else {
    f.slope_first_half = f.slope_second_half = slope;
  }
  return f;
}

DecayFit fit_decay(const DiagnosticsSeries& s, const std::string& quantity, double t_lo,
                   double t_hi) {
  return fit_decay(s.times(), s.column(quantity), t_lo, t_hi);
}

std::optional<double> extinction_time(const DiagnosticsSeries& s) {
  for (const auto& r : s.rows)
    if (r.alive_mass == 0.0) return r.t;
  return std::nullopt;
}

BootstrapReport bootstrap_monitor(const DiagnosticsSeries& s, double delta0, double T0) {
  BootstrapReport rep;
  // Budgets at T0 by linear interpolation between samples.
  double bu0 = 0.0, bg0 = 0.0;
  for (std::size_t i = 0; i < s.rows.size(); ++i) {
    const DiagRow& r = s.rows[i];
    if (r.t >= T0) {
      if (i == 0 || r.t == T0) {
        bu0 = r.budget_u;
        bg0 = r.budget_grad;
      } else {
        const DiagRow& p = s.rows[i - 1];
        const double w = (T0 - p.t) / (r.t - p.t);
        bu0 = p.budget_u + w * (r.budget_u - p.budget_u);
        bg0 = p.budget_grad + w * (r.budget_grad - p.budget_grad);
      }
      break;
    }
  }
  for (const auto& r : s.rows) {
    if (r.t < T0) continue;
    const double ug = r.budget_grad - bg0;
    const double uu = r.budget_u - bu0;
    rep.used_grad = std::max(rep.used_grad, ug);
    rep.used_u = std::max(rep.used_u, uu);
    if ((ug >= delta0 || uu >= 0.5 * delta0) && !rep.first_violation) {
      rep.first_violation = r.t;
      rep.holds = false;
    }
  }
  rep.margin_grad = delta0 - rep.used_grad;
  rep.margin_u = 0.5 * delta0 - rep.used_u;
  return rep;
}

double energy_envelope(double E0, double M0, double g, double t) {
  const double s = std::sqrt(std::max(0.0, E0)) + g * std::sqrt(0.5 * M0) * t;
  return s * s;
}

double j_time_envelope(double E0, double M0, double g, double t) {
  return std::sqrt(2.0 * M0) * t * std::sqrt(std::max(0.0, E0)) + 0.5 * g * M0 * t * t;
}

std::string csv_quote(const std::string& field) {
  if (field.find_first_of(",\"\r\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char ch : field) {
    if (ch == '"') out += '"';
    out += ch;
  }
  out += '"';
  return out;
}

void write_csv(std::ostream& os, const DiagnosticsSeries& s) {
  const auto cols = s.columns();
  for (std::size_t i = 0; i < cols.size(); ++i) os << (i ? "," : "") << csv_quote(cols[i]);
  os << "\r\n";
  for (const auto& r : s.rows) {
    const auto vals = s.values(r);
    for (std::size_t i = 0; i < vals.size(); ++i) os << (i ? "," : "") << format_double(vals[i]);
    os << "\r\n";
  }
}

void write_csv(const std::string& path, const DiagnosticsSeries& s) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(Errc::IoError, "cannot write '" + path + "'");
  write_csv(os, s);
  if (!os) throw Error(Errc::IoError, "write failed for '" + path + "'");
}

namespace {

std::vector<std::vector<std::string>> parse_records(std::istream& is) {
  std::vector<std::vector<std::string>> recs;
  std::vector<std::string> rec;
  std::string field;
  bool quoted = false, any = false;
  char ch;
  while (is.get(ch)) {
    if (quoted) {
      if (ch == '"') {
        if (is.peek() == '"') {
          is.get(ch);
          field += '"';
        } else {
          quoted = false;
        }
      } else {
        field += ch;
      }
      continue;
    }
    if (ch == '"') {
      quoted = true;
      any = true;
    } else if (ch == ',') {
      rec.push_back(std::move(field));
      field.clear();
      any = true;
    } else if (ch == '\r') {
      continue;
    } else if (ch == '\n') {
      if (any || !field.empty()) {
        rec.push_back(std::move(field));
        recs.push_back(std::move(rec));
      }
      rec.clear();
      field.clear();
      any = false;
    } else {
      field += ch;
      any = true;
    }
  }
  if (any || !field.empty()) {
    rec.push_back(std::move(field));
    recs.push_back(std::move(rec));
  }
  return recs;
}

}  // namespace

CsvTable read_csv(std::istream& is) {
  auto recs = parse_records(is);
  CsvTable tab;
  if (recs.empty()) return tab;
  tab.header = std::move(recs.front());
  for (std::size_t r = 1; r < recs.size(); ++r) {
    if (recs[r].size() != tab.header.size())
      throw Error(Errc::IoError, "CSV row " + std::to_string(r) + " has the wrong field count");
    std::vector<double> row;
    row.reserve(recs[r].size());
    for (const auto& f : recs[r]) {
      char* end = nullptr;
      const double v = std::strtod(f.c_str(), &end);
      if (f.empty() || *end != '\0')
        throw Error(Errc::IoError, "non-numeric CSV field '" + f + "'");
      row.push_back(v);
    }
    tab.rows.push_back(std::move(row));
  }
  return tab;
}

CsvTable read_csv(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(Errc::IoError, "cannot read '" + path + "'");
  return read_csv(is);
}

std::vector<double> CsvTable::column(const std::string& name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw Error(Errc::MissingColumn, "no column '" + name + "'");
  const std::size_t idx = static_cast<std::size_t>(it - header.begin());
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(r[idx]);
  return out;
}

}  // namespace vns
