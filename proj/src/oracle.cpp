#include "vns/oracle.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace vns::oracle {

namespace {

constexpr double kPi = std::numbers::pi;

struct State {
  Vec3 x;
  Vec3 v;
};

State rhs(double s, const State& y, const VelocitySampler& u, double g) {
  return {y.v, u(s, y.x) + Vec3(0.0, 0.0, -g) - y.v};
}

State axpy(const State& y, double h, const State& k) { return {y.x + h * k.x, y.v + h * k.v}; }

State rk4_step(double s, const State& y, double h, const VelocitySampler& u, double g) {
  const State k1 = rhs(s, y, u, g);
  const State k2 = rhs(s + h / 2, axpy(y, h / 2, k1), u, g);
  const State k3 = rhs(s + h / 2, axpy(y, h / 2, k2), u, g);
  const State k4 = rhs(s + h, axpy(y, h, k3), u, g);
  return {y.x + h / 6 * (k1.x + 2 * k2.x + 2 * k3.x + k4.x),
          y.v + h / 6 * (k1.v + 2 * k2.v + 2 * k3.v + k4.v)};
}

double simpson_rec(const std::function<double(double)>& f, double a, double b, double fa, double fm,
                   double fb, double whole, double eps, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  const double left = (m - a) / 6 * (fa + 4 * flm + fm);
  const double right = (b - m) / 6 * (fm + 4 * frm + fb);
  const double diff = left + right - whole;
  if (depth <= 0 || std::abs(diff) <= 15 * eps) return left + right + diff / 15;
  return simpson_rec(f, a, m, fa, flm, fm, left, eps / 2, depth - 1) +
         simpson_rec(f, m, b, fm, frm, fb, right, eps / 2, depth - 1);
}

double adaptive_simpson(const std::function<double(double)>& f, double a, double b, double eps) {
  if (a == b) return 0.0;
  // Pre-split so smooth but narrow features are not missed.
  const int panels = 16;
  double sum = 0.0;
  for (int p = 0; p < panels; ++p) {
    const double lo = a + (b - a) * p / panels, hi = a + (b - a) * (p + 1) / panels;
    const double fa = f(lo), fb = f(hi), fm = f(0.5 * (lo + hi));
    const double whole = (hi - lo) / 6 * (fa + 4 * fm + fb);
    sum += simpson_rec(f, lo, hi, fa, fm, fb, whole, eps / panels, 40);
  }
  return sum;
}

double gauss_composite(const std::function<double(double)>& f, double a, double b, int panels) {
  std::vector<double> x, w;
  gauss_legendre(20, x, w);
  double sum = 0.0;
  const double h = (b - a) / panels;
  for (int p = 0; p < panels; ++p) {
    const double c = a + (p + 0.5) * h;
    for (std::size_t i = 0; i < x.size(); ++i) sum += w[i] * f(c + 0.5 * h * x[i]);
  }
  return 0.5 * h * sum;
}

// int_0^inf f by [0, 1] plus r = 1/s on (0, 1].
double half_line(const std::function<double(double)>& f, double eps) {
  const double head = adaptive_simpson(f, 0.0, 1.0, eps / 2);
  const auto tail_f = [&](double s) { return s > 0.0 ? f(1.0 / s) / (s * s) : 0.0; };
  return head + adaptive_simpson(tail_f, 0.0, 1.0, eps / 2);
}

double radial_integral(const InitialDataSpec& s, double alpha, double eps) {
  if (s.family == DataFamily::box) {
    return 4 * kPi * adaptive_simpson([&](double r) { return std::pow(r, 2 + alpha); }, 0.0, s.R, eps);
  }
  if (std::isinf(s.Rmax) && alpha >= s.q - 3)
    throw Error(Errc::DivergentIntegral, "velocity moment of order " + format_double(alpha) +
                                             " diverges for q = " + format_double(s.q));
  const auto f = [&](double r) { return r > 0.0 ? std::pow(r, 2 + alpha) / (1 + std::pow(r, s.q)) : 0.0; };
  const double I = std::isinf(s.Rmax) ? half_line(f, eps) : adaptive_simpson(f, 0.0, s.Rmax, eps);
  return 4 * kPi * I;
}

double vertical_integral(const InitialDataSpec& s, const Domain& domain, double eps) {
  if (s.family == DataFamily::box) return std::min(s.L, domain.Zmax);
  const double top = std::min(s.Lmax, domain.Zmax);
  if (std::isinf(top) && s.m <= 1.0)
    throw Error(Errc::DivergentIntegral, "vertical profile not integrable for m <= 1");
  const auto f = [&](double z) { return 1 / (1 + std::pow(z, s.m)); };
  return std::isinf(top) ? half_line(f, eps) : adaptive_simpson(f, 0.0, top, eps);
}

}  // namespace

FlowResult ode_reference_flow(const PhasePoint& z, double t0, double t1, const VelocitySampler& u,
                              double g, double dt_fine) {
  FlowResult r;
  r.X = z.x;
  r.V = z.v;
  if (t1 == t0) return r;
  const int n = static_cast<int>(std::ceil(std::abs(t1 - t0) / dt_fine));
  const double h = (t1 - t0) / n;
  State y{z.x, z.v};
  for (int i = 0; i < n; ++i) {
    y = rk4_step(t0 + i * h, y, h, u, g);
    if (y.x[2] <= 0.0) r.exited = true;
  }
  r.X = y.x;
  r.V = y.v;
  return r;
}

Vec3 reference_gamma(double t, const Vec3& x, const Vec3& v, const VelocitySampler& u, double g,
                     double dt_fine) {
  return ode_reference_flow({x, v}, t, 0.0, u, g, dt_fine).V;
}

Vec3 reference_lambda(double t, const Vec3& x, const Vec3& v, const VelocitySampler& u, double g,
                      double dt_fine) {
  return ode_reference_flow({x, v}, t, 0.0, u, g, dt_fine).X;
}

void gauss_legendre(int n, std::vector<double>& nodes, std::vector<double>& weights) {
  nodes.assign(n, 0.0);
  weights.assign(n, 0.0);
  for (int i = 0; i < n; ++i) {
    double x = std::cos(kPi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (x * p1 - p0) / (x * x - 1);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    nodes[i] = x;
    weights[i] = 2 / ((1 - x * x) * dp * dp);
  }
}

double integrate(const QuadratureSpec& spec) {
  if (!(spec.target_error > 0.0))
    throw Error(Errc::InvalidConfig, "quadrature target error must be positive");
  switch (spec.rule) {
    case QuadratureRule::adaptive_simpson:
      return adaptive_simpson(spec.integrand, spec.a, spec.b, spec.target_error);
    case QuadratureRule::tensor_gauss: {
      double prev = gauss_composite(spec.integrand, spec.a, spec.b, 1);
      for (int panels = 2; panels <= (1 << 16); panels *= 2) {
        const double cur = gauss_composite(spec.integrand, spec.a, spec.b, panels);
        if (std::abs(cur - prev) <= spec.target_error) return cur;
        prev = cur;
      }
      return prev;
    }
    case QuadratureRule::monte_carlo: {
      std::mt19937_64 eng(1);
      const double n_d = std::min(1e7, std::ceil(1.0 / (spec.target_error * spec.target_error)));
      const long n = static_cast<long>(n_d);
      double sum = 0.0;
      for (long i = 0; i < n; ++i) {
        const double s = static_cast<double>(eng() >> 11) * 0x1.0p-53;
        sum += spec.integrand(spec.a + (spec.b - spec.a) * s);
      }
      return (spec.b - spec.a) * sum / static_cast<double>(n);
    }
  }
  return 0.0;
}

double moment_quadrature(const InitialDataSpec& spec, const Domain& domain, double alpha,
                         double target_error) {
  const double area = domain.Lx * domain.Ly;
  const double Z = vertical_integral(spec, domain, target_error);
  const double V = radial_integral(spec, alpha, target_error);
  double c = spec.c;
  if (spec.normalized) c = 1.0 / (area * Z * radial_integral(spec, 0.0, target_error));
  return c * area * Z * V;
}

double interpolation_constant(double k, double ell) {
  if (ell < 0.0 || ell > k) throw Error(Errc::DomainError, "need 0 <= ell <= k");
  if (ell == k) return 1.0;
  const auto phi = [&](double lr) {
    return 4 * kPi / (ell + 3) * std::exp((ell + 3) * lr) + std::exp((ell - k) * lr);
  };
  // Golden-section search in log rho; phi is convex in log rho.
  double a = -20.0, b = 20.0;
  const double gr = (std::sqrt(5.0) - 1) / 2;
  double c = b - gr * (b - a), d = a + gr * (b - a);
  double fc = phi(c), fd = phi(d);
  for (int it = 0; it < 300 && b - a > 1e-14; ++it) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - gr * (b - a);
      fc = phi(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + gr * (b - a);
      fd = phi(d);
    }
  }
  return phi(0.5 * (a + b));
}

double interpolation_ratio(const RadialProfile& h, double k, double ell) {
  double ml = 0.0, mk = 0.0, hmax = 0.0;
  for (std::size_t i = 0; i + 1 < h.edges.size() && i < h.values.size(); ++i) {
    const double r0 = h.edges[i], r1 = h.edges[i + 1];
    const double v = h.values[i];
    ml += v * 4 * kPi * (std::pow(r1, ell + 3) - std::pow(r0, ell + 3)) / (ell + 3);
    mk += v * 4 * kPi * (std::pow(r1, k + 3) - std::pow(r0, k + 3)) / (k + 3);
    hmax = std::max(hmax, v);
  }
  if (!(ml > 0.0)) return 0.0;
  const double C = interpolation_constant(k, ell);
  const double rhs = C * std::pow(hmax, (k - ell) / (k + 3)) * std::pow(mk, (ell + 3) / (k + 3));
  return ml / rhs;
}

double interpolation_ratio_indicator(double k, double ell) {
  const double C = interpolation_constant(k, ell);
  return 4 * kPi / (ell + 3) / (C * std::pow(4 * kPi / (k + 3), (ell + 3) / (k + 3)));
}

Eigen::MatrixXd fd_jacobian(const VectorMap& f, const Eigen::VectorXd& x, double h) {
  const Eigen::VectorXd f0 = f(x);
  Eigen::MatrixXd J(f0.size(), x.size());
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    Eigen::VectorXd xp = x, xm = x;
    xp[j] += h;
    xm[j] -= h;
    J.col(j) = (f(xp) - f(xm)) / (2 * h);
  }
  return J;
}

Eigen::MatrixXd finite_difference_gradient_check(const VectorMap& f, const Eigen::VectorXd& x,
                                                 double h) {
  const Eigen::MatrixXd Jh = fd_jacobian(f, x, h);
  const Eigen::MatrixXd Jh2 = fd_jacobian(f, x, h / 2);
  return (Jh - Jh2 * (4.0 / 3.0) + Jh * (1.0 / 3.0)).cwiseAbs();
}

std::vector<double> sublinear_gronwall(double y0, const std::vector<double>& times,
                                       const std::vector<double>& h, double beta) {
  if (!(beta > 0.0 && beta < 1.0)) throw Error(Errc::DomainError, "need 0 < beta < 1");
  if (times.size() != h.size()) throw Error(Errc::InvalidConfig, "time and h lengths differ");
  std::vector<double> out(times.size());
  double integral = 0.0;
  const double e = 1 - beta;
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (i > 0) integral += 0.5 * (h[i] + h[i - 1]) * (times[i] - times[i - 1]);
    out[i] = std::pow(std::pow(y0, e) + e * integral, 1 / e);
  }
  return out;
}

double sublinear_gronwall_constant(double y0, double h, double beta, double t) {
  if (!(beta > 0.0 && beta < 1.0)) throw Error(Errc::DomainError, "need 0 < beta < 1");
  const double e = 1 - beta;
  return std::pow(std::pow(y0, e) + e * h * t, 1 / e);
}

double diffusion_eigenvalue(int Nz, double Zmax) {
  const double h = Zmax / Nz;
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(Nz, Nz);
  for (int i = 0; i < Nz; ++i) {
    A(i, i) = 2.0 / (h * h);
    if (i > 0) A(i, i - 1) = -1.0 / (h * h);
    if (i + 1 < Nz) A(i, i + 1) = -1.0 / (h * h);
  }
  // Mirrored ghost u_{-1} = -u_0 at each wall.
  A(0, 0) += 1.0 / (h * h);
  A(Nz - 1, Nz - 1) += 1.0 / (h * h);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

double bisect_root(const std::function<double(double)>& f, double a, double b) {
  double fa = f(a);
  const double fb = f(b);
  if (fa == 0.0) return a;
  if (fb == 0.0) return b;
  if ((fa > 0) == (fb > 0)) throw Error(Errc::DomainError, "root not bracketed");
  for (int it = 0; it < 200; ++it) {
    const double m = 0.5 * (a + b);
    if (m <= a || m >= b) break;
    const double fm = f(m);
    if (fm == 0.0) return m;
    if ((fm > 0) == (fa > 0)) {
      a = m;
      fa = fm;
    } else {
      b = m;
    }
  }
  return 0.5 * (a + b);
}

double reference_exit_time(double x3, double v3, double g, double dt_fine, double t_max) {
  if (x3 <= 0.0) return 0.0;
  auto step = [&](double z, double w, double h, double& z1, double& w1) {
    auto f = [&](double ww, double& dz, double& dw) {
      dz = ww;
      dw = -g - ww;
    };
    double k1z, k1w, k2z, k2w, k3z, k3w, k4z, k4w;
    f(w, k1z, k1w);
    f(w + h / 2 * k1w, k2z, k2w);
    f(w + h / 2 * k2w, k3z, k3w);
    f(w + h * k3w, k4z, k4w);
    z1 = z + h / 6 * (k1z + 2 * k2z + 2 * k3z + k4z);
    w1 = w + h / 6 * (k1w + 2 * k2w + 2 * k3w + k4w);
  };
  double t = 0.0, z = x3, w = v3;
  while (t < t_max) {
    double z1, w1;
    step(z, w, dt_fine, z1, w1);
    if (z1 <= 0.0) {
      const double tau = bisect_root(
          [&](double s) {
            double zs, ws;
            step(z, w, s, zs, ws);
            return zs;
          },
          0.0, dt_fine);
      return t + tau;
    }
    t += dt_fine;
    z = z1;
    w = w1;
  }
  return kInf;
}

double dense_sup(const std::function<double(double)>& f, double a, double b, int n) {
  double best = -kInf;
  for (int i = 0; i <= n; ++i) best = std::max(best, f(a + (b - a) * i / n));
  return best;
}

GridSup grid_sup(const VelocitySampler& u, double t, const Domain& domain, int n) {
  GridSup s;
  for (int k = 0; k < n; ++k)
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) {
        const Vec3 x((i + 0.5) * domain.Lx / n, (j + 0.5) * domain.Ly / n,
                     (k + 0.5) * domain.Zmax / n);
        s.u = std::max(s.u, u(t, x).norm());
        s.grad = std::max(s.grad, u.gradient(t, x).norm());
      }
  return s;
}

}  // namespace vns::oracle
