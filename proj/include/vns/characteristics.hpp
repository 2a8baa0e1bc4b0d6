#pragma once

#include "vns/core.hpp"

#include <cmath>
#include <functional>
#include <memory>
#include <optional>

namespace vns {

struct FlowResult {
  Vec3 X = Vec3::Zero();
  Vec3 V = Vec3::Zero();
  bool exited = false;
  std::optional<double> exit_time;
};

/// e1(s) = 1 - e^{-s}, computed without cancellation.
template <class S>
S relax1(S s) {
  using std::expm1;
  return -expm1(-s);
}

/// e2(s) = s + e^{-s} - 1, with a Taylor branch where cancellation bites.
template <class S>
S relax2(S s) {
  using std::abs;
  using std::expm1;
  if (abs(s) < S(1e-3)) {
    // s^2/2 - s^3/6 + s^4/24 - s^5/120 + s^6/720
    return s * s * (S(1) / 2 + s * (S(-1) / 6 + s * (S(1) / 24 + s * (S(-1) / 120 + s / 720))));
  }
  return s + expm1(-s);
}

/// Closed-form flow of X' = V, V' = a - V over a duration tau (any sign),
/// with constant effective acceleration a.
template <class S>
void linear_drag_flow(S tau, const Vec3T<S>& x, const Vec3T<S>& v, const Vec3T<S>& a,
                      Vec3T<S>& X, Vec3T<S>& V) {
  using std::exp;
  const S e1 = relax1(tau);
  const S e2 = relax2(tau);
  X = x + e1 * v + e2 * a;
  V = exp(-tau) * v + e1 * a;
}

/// Vertical coordinate of the constant-acceleration flow after duration s.
template <class S>
S height_after(S s, S x3, S v3, S a3) {
  return x3 + relax1(s) * v3 + relax2(s) * a3;
}

/// Read-only view of a velocity field u(t, x) with the extension operator P
/// applied: the value and gradient are zero whenever x3 <= 0.
class VelocitySampler {
 public:
  using ValueFn = std::function<Vec3(double, const Vec3&)>;
  using GradFn = std::function<Mat3(double, const Vec3&)>;
  using NormFn = std::function<double(double)>;

  /// The zero field.
  VelocitySampler() = default;
  VelocitySampler(ValueFn value, GradFn grad, double t_lo = -kInf, double t_hi = kInf);

  static VelocitySampler zero() { return VelocitySampler(); }
  static VelocitySampler constant(const Vec3& c);

  bool is_zero() const { return !value_; }

  Vec3 operator()(double t, const Vec3& x) const;
  Mat3 gradient(double t, const Vec3& x) const;

  /// Sup norms of the interior field at time t, when known.
  void set_sup_norms(NormFn sup_u, NormFn sup_grad);
  bool has_sup_norms() const { return is_zero() || static_cast<bool>(sup_u_); }
  double sup_norm(double t) const;
  double sup_grad(double t) const;

  double t_lo() const { return t_lo_; }
  double t_hi() const { return t_hi_; }

 private:
  void check_time(double t) const;

  ValueFn value_;
  GradFn grad_;
  NormFn sup_u_;
  NormFn sup_grad_;
  double t_lo_ = -kInf;
  double t_hi_ = kInf;
};

/// Closed-form gravity-only flow from (t, z) to time s (no exit handling).
FlowResult gravity_flow(double s, double t, const PhasePoint& z, double g);

/// Exit time tau+ of the gravity-only flow started at z, measured from the
/// start. Uses a bracket that depends only on z and g, so the result is
/// independent of any time step.
double gravity_exit_time(const PhasePoint& z, double g);

/// Gravity-only flow from (t, z) to s >= t, stopping at the wall.
FlowResult gravity_flow_absorbed(double s, double t, const PhasePoint& z, double g);

/// Earliest s in (0, dt] with X3(s) = 0 for the frozen-acceleration flow.
std::optional<double> exit_time_in_step(const PhasePoint& z, const Vec3& a_eff, double dt,
                                        double tol_exit = 1e-10);

/// One exponential-integrator substep with u frozen at (t, X(t)).
FlowResult coupled_flow_step(const PhasePoint& z, double t, double dt, const VelocitySampler& u,
                             double g, double tol_exit = 1e-10);

/// Forward flow from (t0, z) to t1 >= t0 with substeps of at most dt.
/// If stop_at_exit, returns the state at the first wall crossing.
FlowResult integrate_flow(const PhasePoint& z, double t0, double t1, double dt,
                          const VelocitySampler& u, double g, bool stop_at_exit = true,
                          double tol_exit = 1e-10);

/// Exact inverse of coupled_flow_step: the state at t - dt that the forward
/// substep maps to z at time t.
PhasePoint backward_step(const PhasePoint& z, double t, double dt, const VelocitySampler& u,
                         double g);

/// Backward flow from (t, z) to time s <= t (no wall handling; P extends u by 0).
PhasePoint integrate_backward(const PhasePoint& z, double t, double s, double dt,
                              const VelocitySampler& u, double g);

/// Default substep for backward maps.
inline constexpr double kBackwardDt = 1e-2;

/// Gamma_{t,x}(v) = V(0; t, x, v).
Vec3 backward_map_gamma(double t, const Vec3& x, const Vec3& v, const VelocitySampler& u,
                        double g, double dt = kBackwardDt);

/// Central-difference Jacobian of v -> Gamma_{t,x}(v).
Mat3 gamma_jacobian(double t, const Vec3& x, const Vec3& v, const VelocitySampler& u, double g,
                    double h, double dt = kBackwardDt);

/// det D_v Gamma_{t,x}(v). A non-positive h selects 1e-5 (1 + |v|).
double jacobian_certificate(double t, const Vec3& x, const Vec3& v, const VelocitySampler& u,
                            double g, double h = 0.0, double dt = kBackwardDt);

struct DisplacementBounds {
  double lhs = 0.0;     // |v| with v = Gamma^{-1}(w), w = Gamma(v)
  double rhs = 0.0;     // e^{-t}[|w| + (e^t - 1)|G| + int_0^t e^s ||Pu(s)|| ds]
  double lhs_v0 = 0.0;  // |v|
  double rhs_v0 = 0.0;  // |V(0)| + (1 - e^{-t})|G| + int_0^t ||Pu(s)|| ds
};

/// Evaluates both displacement inequalities at (t, x, v). The sampler must
/// provide sup norms.
DisplacementBounds displacement_bounds_check(double t, const Vec3& x, const Vec3& v,
                                             const VelocitySampler& u, double g,
                                             double dt = kBackwardDt);

/// Analytic prescribed fields.
///
/// cellular: stream function psi = A sin(k x1) phi(x3), phi(z) = z^2 e^{-z},
///           u = (-A sin(k x1) phi'(x3), 0, A k cos(k x1) phi(x3)).
/// uniform:  u = c for x3 > 0.
/// The field is zero for t > horizon.
class PrescribedField {
 public:
  PrescribedField(const PrescribedFieldSpec& spec, const Domain& domain);

  Vec3 value(double t, const Vec3& x) const;
  Mat3 gradient(double t, const Vec3& x) const;

  double amplitude() const { return amp_; }
  /// ||u(t)||_inf and ||grad u(t)||_inf (Frobenius) of the interior field.
  double sup_u(double t) const;
  double sup_grad(double t) const;
  /// int_0^t ||u||_inf and int_0^t ||grad u||_inf.
  double budget_u(double t) const;
  double budget_grad(double t) const;

  VelocitySampler sampler() const;

  /// Sup over the slab of |u| and |grad u| for unit amplitude.
  double unit_sup_u() const { return unit_sup_u_; }
  double unit_sup_grad() const { return unit_sup_grad_; }

 private:
  bool active(double t) const { return t <= spec_.horizon; }

  PrescribedFieldSpec spec_;
  Domain domain_;
  double k_ = 1.0;
  double amp_ = 0.0;
  double unit_sup_u_ = 0.0;
  double unit_sup_grad_ = 0.0;
};

}  // namespace vns
