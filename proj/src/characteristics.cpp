#include "vns/characteristics.hpp"

#include "numerics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace vns {

VelocitySampler::VelocitySampler(ValueFn value, GradFn grad, double t_lo, double t_hi)
    : value_(std::move(value)), grad_(std::move(grad)), t_lo_(t_lo), t_hi_(t_hi) {}

VelocitySampler VelocitySampler::constant(const Vec3& c) {
  VelocitySampler s([c](double, const Vec3&) { return c; },
                    [](double, const Vec3&) { return Mat3::Zero().eval(); });
  const double n = c.norm();
  s.set_sup_norms([n](double) { return n; }, [](double) { return 0.0; });
  return s;
}

void VelocitySampler::check_time(double t) const {
  // Allow a relative slack of a few ulps at the ends of stored histories.
  const double slack = 1e-12 * std::max({1.0, std::abs(t_lo_), std::abs(t_hi_)});
  if (t < t_lo_ - slack || t > t_hi_ + slack)
    throw Error(Errc::FieldHistoryUnavailable,
                "field requested at t=" + format_double(t) + " outside [" + format_double(t_lo_) +
                    ", " + format_double(t_hi_) + "]");
}

Vec3 VelocitySampler::operator()(double t, const Vec3& x) const {
  if (!value_) return Vec3::Zero();
  check_time(t);
  if (!(x[2] > 0.0)) return Vec3::Zero();
  return value_(t, x);
}

Mat3 VelocitySampler::gradient(double t, const Vec3& x) const {
  if (!value_ || !grad_) return Mat3::Zero();
  check_time(t);
  if (!(x[2] > 0.0)) return Mat3::Zero();
  return grad_(t, x);
}

void VelocitySampler::set_sup_norms(NormFn sup_u, NormFn sup_grad) {
  sup_u_ = std::move(sup_u);
  sup_grad_ = std::move(sup_grad);
}

double VelocitySampler::sup_norm(double t) const {
  if (is_zero()) return 0.0;
  if (!sup_u_) throw Error(Errc::DomainError, "sampler has no sup-norm information");
  return sup_u_(t);
}

double VelocitySampler::sup_grad(double t) const {
  if (is_zero()) return 0.0;
  if (!sup_grad_) throw Error(Errc::DomainError, "sampler has no gradient sup-norm information");
  return sup_grad_(t);
}

FlowResult gravity_flow(double s, double t, const PhasePoint& z, double g) {
  FlowResult r;
  linear_drag_flow(s - t, z.x, z.v, gravity(g), r.X, r.V);
  return r;
}

double gravity_exit_time(const PhasePoint& z, double g) {
  const double x3 = z.x[2];
  const double v3 = z.v[2];
  if (!(x3 > 0.0)) return 0.0;
  const double a3 = -g;
  // X3 is concave when v3 > a3 with its maximum at s_e = log((v3 - a3) / -a3),
  // and decreasing otherwise; in both cases the first root is bracketed by
  // [max(0, s_e), 1 + (x3 + |v3|) / g].
  double lo = 0.0;
  if (v3 > 0.0) lo = std::log((v3 - a3) / -a3);
  double hi = 1.0 + (x3 + std::abs(v3)) / g;
  for (int it = 0; it < 400; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (height_after(mid, x3, v3, a3) > 0.0) lo = mid;
    else hi = mid;
  }
  return hi;
}

FlowResult gravity_flow_absorbed(double s, double t, const PhasePoint& z, double g) {
  const double tau = gravity_exit_time(z, g);
  if (t + tau <= s) {
    FlowResult r = gravity_flow(t + tau, t, z, g);
    r.exited = true;
    r.exit_time = t + tau;
    return r;
  }
  return gravity_flow(s, t, z, g);
}

std::optional<double> exit_time_in_step(const PhasePoint& z, const Vec3& a_eff, double dt,
                                        double tol_exit) {
  const double x3 = z.x[2];
  const double v3 = z.v[2];
  const double a3 = a_eff[2];
  if (!(x3 > 0.0)) return 0.0;
  auto f = [&](double s) { return height_after(s, x3, v3, a3); };

  // X3'(s) = a3 + e^{-s}(v3 - a3) vanishes at most once.
  double s_e = -1.0;
  if (a3 != 0.0) {
    const double ratio = (v3 - a3) / -a3;
    if (ratio > 1.0) s_e = std::log(ratio);
  }
  double lo = 0.0;
  double hi = 0.0;
  if (s_e > 0.0 && s_e < dt && f(s_e) <= 0.0) {
    hi = s_e;
  } else if (f(dt) <= 0.0) {
    lo = (s_e > 0.0 && s_e < dt) ? s_e : 0.0;
    hi = dt;
  } else {
    return std::nullopt;
  }
  for (int it = 0; it < 400; ++it) {
    if (std::abs(f(hi)) <= tol_exit) break;
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (f(mid) > 0.0) lo = mid;
    else hi = mid;
  }
  return hi;
}

namespace {

Vec3 frozen_acceleration(const VelocitySampler& u, double t, const Vec3& x, double g) {
  const Vec3 c = u(t, x);
  if (!c.allFinite()) throw Error(Errc::NonFiniteField, "sampler returned a non-finite value");
  return gravity(g) + c;
}

}  // namespace

FlowResult coupled_flow_step(const PhasePoint& z, double t, double dt, const VelocitySampler& u,
                             double g, double tol_exit) {
  if (!(dt > 0.0)) throw Error(Errc::InvalidTimeStep, "substep must be positive");
  const Vec3 a = frozen_acceleration(u, t, z.x, g);
  FlowResult r;
  if (auto s = exit_time_in_step(z, a, dt, tol_exit)) {
    linear_drag_flow(*s, z.x, z.v, a, r.X, r.V);
    r.exited = true;
    r.exit_time = t + *s;
    return r;
  }
  linear_drag_flow(dt, z.x, z.v, a, r.X, r.V);
  return r;
}

namespace {

int step_count(double span, double dt) {
  if (span <= 0.0) return 0;
  const double n = std::ceil(span / dt * (1.0 - 1e-12));
  return std::max(1, static_cast<int>(n));
}

}  // namespace

FlowResult integrate_flow(const PhasePoint& z, double t0, double t1, double dt,
                          const VelocitySampler& u, double g, bool stop_at_exit,
                          double tol_exit) {
  if (!(dt > 0.0)) throw Error(Errc::InvalidTimeStep, "substep must be positive");
  const int n = step_count(t1 - t0, dt);
  const double h = n > 0 ? (t1 - t0) / n : 0.0;
  PhasePoint cur = z;
  FlowResult r;
  r.X = z.x;
  r.V = z.v;
  // Neumaier-compensated accumulation of the per-step increments: long runs
  // of small substeps otherwise lose about one ulp of |X| per step.
  Vec3 cx = Vec3::Zero(), cv = Vec3::Zero();
  auto add = [](Vec3& sum, Vec3& comp, const Vec3& inc) {
    for (int k = 0; k < 3; ++k) {
      const double s = sum[k] + inc[k];
      comp[k] += std::abs(sum[k]) >= std::abs(inc[k]) ? (sum[k] - s) + inc[k] : (inc[k] - s) + sum[k];
      sum[k] = s;
    }
  };
  const double e1 = relax1(h), e2 = relax2(h);
  for (int i = 0; i < n; ++i) {
    const double t = t0 + i * h;
    const PhasePoint zc{cur.x + cx, cur.v + cv};
    const Vec3 a = frozen_acceleration(u, t, zc.x, g);
    if (stop_at_exit) {
      if (auto s = exit_time_in_step(zc, a, h, tol_exit)) {
        linear_drag_flow(*s, zc.x, zc.v, a, r.X, r.V);
        r.exited = true;
        r.exit_time = t + *s;
        return r;
      }
    }
    const Vec3 v = cur.v;
    add(cur.x, cx, e1 * v + e2 * a + e1 * cv);
    add(cur.v, cv, e1 * (a - v) - e1 * cv);
  }
  r.X = cur.x + cx;
  r.V = cur.v + cv;
  return r;
}

PhasePoint backward_step(const PhasePoint& z, double t, double dt, const VelocitySampler& u,
                         double g) {
  const double e1 = relax1(dt);
  const double e2 = relax2(dt);
  const double edt = std::exp(dt);
  const Vec3 G = gravity(g);
  PhasePoint p;
  auto solve = [&](const Vec3& a) {
    p.v = edt * (z.v - e1 * a);
    p.x = z.x - e1 * p.v - e2 * a;
  };
  solve(G);
  if (u.is_zero()) return p;
  for (int it = 0; it < 100; ++it) {
    const Vec3 prev = p.x;
    solve(frozen_acceleration(u, t - dt, p.x, g));
    if ((p.x - prev).norm() <= 1e-15 * (1.0 + p.x.norm())) break;
  }
  return p;
}

PhasePoint integrate_backward(const PhasePoint& z, double t, double s, double dt,
                              const VelocitySampler& u, double g) {
  if (!(dt > 0.0)) throw Error(Errc::InvalidTimeStep, "substep must be positive");
  const int n = step_count(t - s, dt);
  const double h = n > 0 ? (t - s) / n : 0.0;
  PhasePoint cur = z;
  for (int i = n; i > 0; --i) cur = backward_step(cur, s + i * h, h, u, g);
  return cur;
}

Vec3 backward_map_gamma(double t, const Vec3& x, const Vec3& v, const VelocitySampler& u,
                        double g, double dt) {
  if (t == 0.0) return v;
  return integrate_backward(PhasePoint{x, v}, t, 0.0, dt, u, g).v;
}

Mat3 gamma_jacobian(double t, const Vec3& x, const Vec3& v, const VelocitySampler& u, double g,
                    double h, double dt) {
  Mat3 J;
  for (int i = 0; i < 3; ++i) {
    Vec3 vp = v, vm = v;
    vp[i] += h;
    vm[i] -= h;
    J.col(i) = (backward_map_gamma(t, x, vp, u, g, dt) - backward_map_gamma(t, x, vm, u, g, dt)) /
               (2.0 * h);
    if (!J.col(i).allFinite())
      throw Error(Errc::SingularDifference, "non-finite Jacobian column");
  }
  return J;
}

double jacobian_certificate(double t, const Vec3& x, const Vec3& v, const VelocitySampler& u,
                            double g, double h, double dt) {
  if (!(h > 0.0)) h = 1e-5 * (1.0 + v.norm());
  return gamma_jacobian(t, x, v, u, g, h, dt).determinant();
}

DisplacementBounds displacement_bounds_check(double t, const Vec3& x, const Vec3& v,
                                             const VelocitySampler& u, double g, double dt) {
  const Vec3 w = backward_map_gamma(t, x, v, u, g, dt);
  double I0 = 0.0;
  double I1 = 0.0;
  if (!u.is_zero() && t > 0.0) {
    I0 = detail::integrate_gl(0.0, t, [&](double s) { return u.sup_norm(s); }, 64);
    I1 = detail::integrate_gl(0.0, t, [&](double s) { return std::exp(s) * u.sup_norm(s); }, 64);
  }
  DisplacementBounds b;
  b.lhs = v.norm();
  b.rhs = std::exp(-t) * (w.norm() + std::expm1(t) * g + I1);
  b.lhs_v0 = v.norm();
  b.rhs_v0 = w.norm() + relax1(t) * g + I0;
  return b;
}

namespace {

double phi(double z) { return z * z * std::exp(-z); }
double dphi(double z) { return (2.0 * z - z * z) * std::exp(-z); }
double ddphi(double z) { return (2.0 - 4.0 * z + z * z) * std::exp(-z); }

}  // namespace

PrescribedField::PrescribedField(const PrescribedFieldSpec& spec, const Domain& domain)
    : spec_(spec), domain_(domain) {
  if (spec_.type == "cellular") {
    k_ = 2.0 * std::numbers::pi * spec_.wavenumber / domain_.Lx;
    const double k = k_;
    const double zhi = std::max(domain_.Zmax, 50.0);
    unit_sup_u_ = detail::maximize_1d(
        [k](double z) { return std::max(std::abs(dphi(z)), k * phi(z)); }, 0.0, zhi);
    unit_sup_grad_ = std::sqrt(detail::maximize_1d(
        [k](double z) {
          const double a = 2.0 * k * k * dphi(z) * dphi(z);
          const double b = ddphi(z) * ddphi(z) + k * k * k * k * phi(z) * phi(z);
          return std::max(a, b);
        },
        0.0, zhi));
  } else if (spec_.type == "uniform") {
    unit_sup_u_ = spec_.uniform.norm();
    unit_sup_grad_ = 0.0;
  } else if (spec_.type == "zero") {
    unit_sup_u_ = 0.0;
    unit_sup_grad_ = 0.0;
  } else {
    throw Error(Errc::InvalidConfig, "unknown prescribed field type '" + spec_.type + "'");
  }

  amp_ = spec_.amplitude;
  if (spec_.budget > 0.0) {
    if (!std::isfinite(spec_.horizon) || !(spec_.horizon > 0.0))
      throw Error(Errc::InvalidConfig, "a field budget needs a finite positive horizon");
    double unit = 0.0;
    if (spec_.budget_kind == "u") unit = unit_sup_u_;
    else if (spec_.budget_kind == "grad") unit = unit_sup_grad_;
    else throw Error(Errc::InvalidConfig, "field_budget_kind must be u or grad");
    if (!(unit > 0.0)) throw Error(Errc::InvalidConfig, "field shape has zero norm for budget");
    amp_ = spec_.budget / (unit * spec_.horizon);
  }
}

Vec3 PrescribedField::value(double t, const Vec3& x) const {
  if (!active(t) || !(x[2] > 0.0)) return Vec3::Zero();
  if (spec_.type == "cellular") {
    const double s = std::sin(k_ * x[0]);
    const double c = std::cos(k_ * x[0]);
    return Vec3(-amp_ * s * dphi(x[2]), 0.0, amp_ * k_ * c * phi(x[2]));
  }
  if (spec_.type == "uniform") {
    const double n = spec_.uniform.norm();
    return n > 0.0 ? Vec3(amp_ * spec_.uniform / n) : Vec3::Zero();
  }
  return Vec3::Zero();
}

Mat3 PrescribedField::gradient(double t, const Vec3& x) const {
  Mat3 J = Mat3::Zero();
  if (!active(t) || !(x[2] > 0.0) || spec_.type != "cellular") return J;
  const double s = std::sin(k_ * x[0]);
  const double c = std::cos(k_ * x[0]);
  const double z = x[2];
  J(0, 0) = -amp_ * k_ * c * dphi(z);
  J(0, 2) = -amp_ * s * ddphi(z);
  J(2, 0) = -amp_ * k_ * k_ * s * phi(z);
  J(2, 2) = amp_ * k_ * c * dphi(z);
  return J;
}

double PrescribedField::sup_u(double t) const {
  return active(t) ? std::abs(amp_) * unit_sup_u_ : 0.0;
}

double PrescribedField::sup_grad(double t) const {
  return active(t) ? std::abs(amp_) * unit_sup_grad_ : 0.0;
}

double PrescribedField::budget_u(double t) const {
  return std::abs(amp_) * unit_sup_u_ * std::clamp(t, 0.0, spec_.horizon);
}

double PrescribedField::budget_grad(double t) const {
  return std::abs(amp_) * unit_sup_grad_ * std::clamp(t, 0.0, spec_.horizon);
}

VelocitySampler PrescribedField::sampler() const {
  if (amp_ == 0.0 || spec_.type == "zero") return VelocitySampler::zero();
  auto self = std::make_shared<const PrescribedField>(*this);
  VelocitySampler s([self](double t, const Vec3& x) { return self->value(t, x); },
                    [self](double t, const Vec3& x) { return self->gradient(t, x); });
  s.set_sup_norms([self](double t) { return self->sup_u(t); },
                  [self](double t) { return self->sup_grad(t); });
  return s;
}

}  // namespace vns
