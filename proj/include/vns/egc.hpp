#pragma once

#include "vns/characteristics.hpp"
#include "vns/core.hpp"

#include <array>
#include <cmath>
#include <cstdint>

namespace vns {

struct ParticleEnsemble;

/// t0(L, R) = (L + R + g) / g, the gravity-only exit bound for (0, L) x B(R).
template <class S>
S t0(S L, S R, S g) {
  return (L + R + g) / g;
}

/// kappa_alpha = (e^{-alpha} + alpha - 1) g / 2.
template <class S>
S kappa(S alpha, S g) {
  using std::expm1;
  const S eta = alpha < S(1e-3)
                    ? alpha * alpha * (S(1) / 2 + alpha * (S(-1) / 6 + alpha / 24))
                    : expm1(-alpha) + alpha;
  return eta * g / 2;
}

struct EgcSets {
  double L = 0.0;
  double R = 0.0;
};

/// L_g(s) = (s g - (1 - e^{-s}) g)/2 - 1 and R_g(s) = (s g / (1 - e^{-s}) - g)/2 - 1.
/// DomainError for s < t0(1, 1).
EgcSets egc_sets(double s, double g);

/// The half-shifted sets L(t) = L_g(t - 1/2), R(t) = R_g(t - 1/2).
EgcSets shifted_egc_sets(double t, double g);

/// Exit time from the corner x3 = L, v = (0, 0, R): the largest gravity-only
/// exit time over (0, L) x B(R).
double gravity_corner_sup(double L, double R, double g);

struct EgcQuery {
  double L = 1.0;
  double R = 1.0;
  double T = 3.0;
};

struct EgcReport {
  bool satisfied = false;
  double max_exit_time = 0.0;
  double margin = 0.0;
  long sample_count = 0;
  double budget_used = 0.0;  // int_0^T ||u||_inf
  long unexited = 0;         // samples still inside at T
};

/// 6-D Halton point (bases 2, 3, 5, 7, 11, 13) with index n >= 1.
std::array<double, 6> halton6(std::uint64_t n);

struct EgcOptions {
  double g = 1.0;
  Domain domain;
  double dt = 1e-2;  // substep for non-gravity modes
  double tol_exit = 1e-10;
};

EgcReport verify_egc(const EgcQuery& query, Mode mode, const VelocitySampler& u, long samples,
                     std::uint64_t seed, const EgcOptions& opt);

struct MomentDecayBound {
  bool active = false;  // t > T0
  double bound_point = 0.0;
  double bound_Lr = 0.0;
  double L_t = 0.0;
  double R_t = 0.0;
};

/// Two-term decay bound constant * [N_q / (1 + R(t))^{k1} + H_{ell,k2} / (1 + L(t))^{k2}]
/// and its L^r analogue with K_{q,r} and F_{ell,k2,r}.
MomentDecayBound predicted_moment_decay(const InitialDataSpec& spec, const Domain& domain, double t,
                                        double k1, double k2, double q, double ell, double g,
                                        double r = 1.0, double constant = 1.0);

/// Alive particles whose origin lies in the absorbed set {|v0| <= R(t), x03 <= L(t)}.
long split_representation_violations(const ParticleEnsemble& ens, double t, double g);

}  // namespace vns
