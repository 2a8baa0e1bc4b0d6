#include "vns/egc.hpp"

#include "numerics.hpp"
#include "vns/kinetic.hpp"
#include "vns/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

namespace vns {

EgcSets egc_sets(double s, double g) {
  const double tmin = t0(1.0, 1.0, g);
  if (!(s >= tmin)) throw Error(Errc::DomainError, "egc_sets needs s >= t0(1,1)");
  const double e1 = -std::expm1(-s);
  EgcSets out;
  out.L = 0.5 * (s * g - e1 * g) - 1.0;
  out.R = 0.5 * (s * g / e1 - g) - 1.0;
  return out;
}

EgcSets shifted_egc_sets(double t, double g) { return egc_sets(t - 0.5, g); }

double gravity_corner_sup(double L, double R, double g) {
  PhasePoint z;
  z.x = Vec3(0.0, 0.0, L);
  z.v = Vec3(0.0, 0.0, R);
  return gravity_exit_time(z, g);
}

std::array<double, 6> halton6(std::uint64_t n) {
  static constexpr std::array<std::uint64_t, 6> bases = {2, 3, 5, 7, 11, 13};
  std::array<double, 6> out{};
  for (int d = 0; d < 6; ++d) {
    const std::uint64_t b = bases[d];
    double f = 1.0, r = 0.0;
    for (std::uint64_t i = n; i > 0; i /= b) {
      f /= static_cast<double>(b);
      r += f * static_cast<double>(i % b);
    }
    out[d] = r;
  }
  return out;
}

EgcReport verify_egc(const EgcQuery& q, Mode mode, const VelocitySampler& u, long samples,
                     std::uint64_t seed, const EgcOptions& opt) {
  if (!(q.L > 0.0) || !(q.R > 0.0) || !(q.T > 0.0))
    throw Error(Errc::DomainError, "EGC query needs L, R, T > 0");
  if (samples < 1) throw Error(Errc::DomainError, "EGC needs at least one sample");
  const bool closed_form = mode == Mode::gravity_only;
  const int chunks = worker_count();
  std::vector<double> chunk_max(chunks, 0.0);
  std::vector<long> chunk_unexited(chunks, 0);
  parallel_chunks(
      static_cast<std::size_t>(samples),
      [&](int c, std::size_t b, std::size_t e) {
        double mx = 0.0;
        long open = 0;
        for (std::size_t n = b; n < e; ++n) {
          const auto h = halton6(seed + n + 1);
          PhasePoint z;
          z.x = Vec3(h[0] * opt.domain.Lx, h[1] * opt.domain.Ly, q.L * h[2]);
          if (!(z.x[2] > 0.0)) z.x[2] = q.L * 0x1.0p-53;
          const double r = q.R * std::cbrt(h[3]);
          const double ct = 1.0 - 2.0 * h[4];
          const double st = std::sqrt(std::max(0.0, 1.0 - ct * ct));
          const double ph = 2.0 * std::numbers::pi * h[5];
          z.v = r * Vec3(st * std::cos(ph), st * std::sin(ph), ct);
          double tau;
          if (closed_form) {
            tau = gravity_exit_time(z, opt.g);
          } else {
            const FlowResult fr = integrate_flow(z, 0.0, q.T, opt.dt, u, opt.g, true, opt.tol_exit);
            if (fr.exited) {
              tau = *fr.exit_time;
            } else {
              tau = kInf;
              ++open;
            }
          }
          mx = std::max(mx, tau);
        }
        chunk_max[c] = mx;
        chunk_unexited[c] = open;
      },
      chunks);
  EgcReport rep;
  rep.sample_count = samples;
  for (int c = 0; c < chunks; ++c) {
    rep.max_exit_time = std::max(rep.max_exit_time, chunk_max[c]);
    rep.unexited += chunk_unexited[c];
  }
  rep.satisfied = rep.max_exit_time < q.T;
  rep.margin = q.T - rep.max_exit_time;
  if (!closed_form && !u.is_zero() && u.has_sup_norms())
    rep.budget_used = detail::integrate_gl(0.0, q.T, [&](double s) { return u.sup_norm(s); }, 256);
  return rep;
}

MomentDecayBound predicted_moment_decay(const InitialDataSpec& spec, const Domain& domain, double t,
                                        double k1, double k2, double q, double ell, double g,
                                        double r, double constant) {
  if (!(q > k1 + ell + 3.0)) throw Error(Errc::ExponentViolation, "needs q > k1 + ell + 3");
  MomentDecayBound b;
  const double T0 = t0(1.0, 1.0, g) + 1.0;
  b.active = t > T0;
  if (t - 0.5 < t0(1.0, 1.0, g)) return b;
  const EgcSets s = shifted_egc_sets(t, g);
  b.L_t = s.L;
  b.R_t = s.R;
  double w1 = 1.0 / std::pow(1.0 + s.R, k1);
  double w2 = 1.0 / std::pow(1.0 + s.L, k2);
  if (spec.family == DataFamily::box) {
    // Each term comes from f0 restricted to |v| > R(t) or x3 > L(t).
    if (spec.R <= s.R) w1 = 0.0;
    if (spec.L <= s.L) w2 = 0.0;
  }
  const double N = w1 > 0.0 ? functional_N(spec, domain, q) : 0.0;
  const double H = w2 > 0.0 ? functional_H(spec, domain, ell, k2) : 0.0;
  // The L^r functionals may diverge where the pointwise ones do not.
  auto finite_or_inf = [](auto f) {
    try {
      return f();
    } catch (const Error& e) {
      if (e.code() != Errc::DivergentFunctional) throw;
      return kInf;
    }
  };
  const double K = w1 > 0.0 ? finite_or_inf([&] { return functional_K(spec, domain, q, r); }) : 0.0;
  const double F = w2 > 0.0 ? finite_or_inf([&] { return functional_F(spec, domain, ell, k2, r); }) : 0.0;
  b.bound_point = constant * (N * w1 + H * w2);
  b.bound_Lr = constant * (K * w1 + F * w2);
  return b;
}

long split_representation_violations(const ParticleEnsemble& ens, double t, double g) {
  if (t - 0.5 < t0(1.0, 1.0, g)) return 0;
  const EgcSets s = shifted_egc_sets(t, g);
  long bad = 0;
  for (const auto& p : ens.particles)
    if (p.origin.v.norm() <= s.R && p.origin.x[2] <= s.L) ++bad;
  return bad;
}

}  // namespace vns
