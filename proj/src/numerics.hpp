#pragma once

// Small quadrature and optimization helpers shared by the library sources.

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

namespace vns::detail {

// 10-point Gauss-Legendre nodes and weights on [-1, 1].
inline constexpr std::array<double, 5> kGlX = {0.1488743389816312, 0.4333953941292472,
                                               0.6794095682990244, 0.8650633666889845,
                                               0.9739065285171717};
inline constexpr std::array<double, 5> kGlW = {0.2955242247147529, 0.2692667193099963,
                                               0.2190863625159820, 0.1494513491505806,
                                               0.0666713443086881};

/// Composite 10-point Gauss-Legendre on [a, b] with `panels` equal panels.
template <class F>
double integrate_gl(double a, double b, F&& f, int panels = 16) {
  if (!(b > a)) return 0.0;
  const double h = (b - a) / panels;
  double sum = 0.0;
  for (int p = 0; p < panels; ++p) {
    const double c = a + (p + 0.5) * h;
    const double r = 0.5 * h;
    for (int i = 0; i < 5; ++i) {
      sum += kGlW[i] * (f(c - r * kGlX[i]) + f(c + r * kGlX[i])) * r;
    }
  }
  return sum;
}

/// Double-exponential quadrature of a smooth integrand on (0, inf) with
/// algebraic or faster decay: x = exp((pi/2) sinh(s)).
template <class F>
double integrate_half_line(F&& f, double h = 1.0 / 64.0, double smax = 4.5) {
  const double c = 0.5 * std::numbers::pi;
  double sum = 0.0;
  const int n = static_cast<int>(std::ceil(smax / h));
  for (int k = -n; k <= n; ++k) {
    const double s = k * h;
    const double x = std::exp(c * std::sinh(s));
    const double dx = c * std::cosh(s) * x;
    if (!std::isfinite(x) || x == 0.0) continue;
    const double val = f(x) * dx;
    if (std::isfinite(val)) sum += val;
  }
  return sum * h;
}

/// Double-exponential (tanh-sinh) quadrature on a finite interval.
template <class F>
double integrate_finite(double a, double b, F&& f, double h = 1.0 / 64.0, double smax = 3.5) {
  if (!(b > a)) return 0.0;
  const double c = 0.5 * std::numbers::pi;
  const double mid = 0.5 * (a + b);
  const double half = 0.5 * (b - a);
  double sum = 0.0;
  const int n = static_cast<int>(std::ceil(smax / h));
  for (int k = -n; k <= n; ++k) {
    const double s = k * h;
    const double u = c * std::sinh(s);
    const double th = std::tanh(u);
    const double w = c * std::cosh(s) / (std::cosh(u) * std::cosh(u));
    const double x = mid + half * th;
    if (!(x > a) || !(x < b)) continue;
    sum += f(x) * w;
  }
  return sum * half * h;
}

/// Maximum of f on [a, b]: dense scan followed by golden-section refinement
/// around the best sample.
template <class F>
double maximize_1d(F&& f, double a, double b, int samples = 20001, double* argmax = nullptr) {
  double best = -INFINITY;
  int ib = 0;
  const double h = (b - a) / (samples - 1);
  for (int i = 0; i < samples; ++i) {
    const double v = f(a + i * h);
    if (v > best) {
      best = v;
      ib = i;
    }
  }
  double lo = a + std::max(0, ib - 1) * h;
  double hi = a + std::min(samples - 1, ib + 1) * h;
  const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
  double x1 = hi - gr * (hi - lo);
  double x2 = lo + gr * (hi - lo);
  double f1 = f(x1), f2 = f(x2);
  for (int it = 0; it < 100 && hi - lo > 1e-14 * (1.0 + std::abs(hi)); ++it) {
    if (f1 < f2) {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + gr * (hi - lo);
      f2 = f(x2);
    } else {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - gr * (hi - lo);
      f1 = f(x1);
    }
  }
  double xb = a + ib * h;
  for (double x : {x1, x2}) {
    const double v = f(x);
    if (v > best) {
      best = v;
      xb = x;
    }
  }
  if (argmax) *argmax = xb;
  return best;
}

}  // namespace vns::detail
