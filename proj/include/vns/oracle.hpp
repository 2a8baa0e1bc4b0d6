#pragma once

#include "vns/characteristics.hpp"
#include "vns/core.hpp"

#include <Eigen/Dense>

#include <functional>
#include <vector>

namespace vns::oracle {

/// Classical RK4 for X' = V, V' = Pu(s, X) + G - V from (t0, z) to t1 (either
/// direction), no wall handling. `exited` is set if X3 <= 0 at any node.
FlowResult ode_reference_flow(const PhasePoint& z, double t0, double t1, const VelocitySampler& u,
                              double g, double dt_fine);

/// V(0; t, x, v) and X(0; t, x, v) by backward RK4.
Vec3 reference_gamma(double t, const Vec3& x, const Vec3& v, const VelocitySampler& u, double g,
                     double dt_fine);
Vec3 reference_lambda(double t, const Vec3& x, const Vec3& v, const VelocitySampler& u, double g,
                      double dt_fine);

enum class QuadratureRule { tensor_gauss, adaptive_simpson, monte_carlo };

struct QuadratureSpec {
  std::function<double(double)> integrand;
  double a = 0.0;
  double b = 1.0;
  QuadratureRule rule = QuadratureRule::adaptive_simpson;
  double target_error = 1e-10;
};

/// 1-D quadrature on a finite interval.
double integrate(const QuadratureSpec& spec);

/// Gauss-Legendre nodes and weights on [-1, 1] by Newton iteration.
void gauss_legendre(int n, std::vector<double>& nodes, std::vector<double>& weights);

/// int int |v|^alpha f0 over cell x (0, inf) x R^3, with the oracle's own
/// normalization when spec.normalized. DivergentIntegral if infinite.
double moment_quadrature(const InitialDataSpec& spec, const Domain& domain, double alpha,
                         double target_error = 1e-10);

/// min over rho of (4 pi/(ell+3)) rho^{ell+3} + rho^{ell-k}, the constant in
/// m_ell <= C ||h||_inf^{(k-ell)/(k+3)} m_k^{(ell+3)/(k+3)}.
double interpolation_constant(double k, double ell);

/// Radial step profile h = values[i] on shells [edges[i], edges[i+1]).
struct RadialProfile {
  std::vector<double> edges;
  std::vector<double> values;
};
/// m_ell / (C ||h||^a m_k^b), evaluated exactly on the shells.
double interpolation_ratio(const RadialProfile& h, double k, double ell);

/// Largest ratio over indicator profiles 1{|v| < rho} (equal for every rho).
double interpolation_ratio_indicator(double k, double ell);

using VectorMap = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

/// Central-difference Jacobian with step h.
Eigen::MatrixXd fd_jacobian(const VectorMap& f, const Eigen::VectorXd& x, double h);

/// |J(h) - (4/3) J(h/2) + (1/3) J(h)| entrywise.
Eigen::MatrixXd finite_difference_gradient_check(const VectorMap& f, const Eigen::VectorXd& x,
                                                 double h);

/// (y0^{1-beta} + (1-beta) int_0^t h)^{1/(1-beta)} on the given time grid,
/// with int h by the trapezoidal rule.
std::vector<double> sublinear_gronwall(double y0, const std::vector<double>& times,
                                       const std::vector<double>& h, double beta);
/// Closed form for constant h.
double sublinear_gronwall_constant(double y0, double h, double beta, double t);

/// Smallest eigenvalue of -d^2/dz^2 discretized on Nz cells with Dirichlet
/// ends through mirrored ghosts, by a dense symmetric eigensolver.
double diffusion_eigenvalue(int Nz, double Zmax);

/// Root of f on [a, b] by bisection (f(a), f(b) of opposite sign).
double bisect_root(const std::function<double(double)>& f, double a, double b);

/// First time X3 = 0 of the gravity-only flow from (x3, v3), by RK4 stepping
/// and bisection on the step where the sign changes. Infinity if none by t_max.
double reference_exit_time(double x3, double v3, double g, double dt_fine = 1e-3,
                           double t_max = 1e3);

/// max of f over n + 1 equispaced points of [a, b].
double dense_sup(const std::function<double(double)>& f, double a, double b, int n);

/// Max of |u| and |grad u| over the n^3 cell centers of the slab.
struct GridSup {
  double u = 0.0;
  double grad = 0.0;
};
GridSup grid_sup(const VelocitySampler& u, double t, const Domain& domain, int n);

}  // namespace vns::oracle
