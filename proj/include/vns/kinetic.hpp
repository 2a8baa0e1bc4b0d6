#pragma once

#include "vns/characteristics.hpp"
#include "vns/core.hpp"

#include <array>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

namespace vns {

/// Deterministic uniform doubles in [0, 1) from mt19937_64 (53-bit mantissa),
/// identical on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }
  std::uint64_t raw() { return eng_(); }

 private:
  std::mt19937_64 eng_;
};

/// Particles (alive first, in creation order) plus absorbed ones.
struct ParticleEnsemble {
  std::vector<Particle> particles;  // alive
  std::vector<Particle> graveyard;  // absorbed, in absorption order
  double time = 0.0;
  long initial_count = 0;

  double alive_mass() const;
  std::size_t alive_count() const { return particles.size(); }
};

/// Grid-indexed scalar array, index (k * Ny + j) * Nx + i.
using GridArray = Eigen::ArrayXd;

inline long cell_index(const GridDims& g, int i, int j, int k) {
  return (static_cast<long>(k) * g.Ny + j) * g.Nx + i;
}

struct MomentField {
  GridDims grid;
  Domain domain;
  GridArray rho;
  std::array<GridArray, 3> j;
  std::map<double, GridArray> higher;  // m_alpha for requested alpha

  double cell_volume() const {
    return domain.Lx / grid.Nx * domain.Ly / grid.Ny * domain.Zmax / grid.Nz;
  }
};

/// Mass of the spec over the horizontal cell; the value of c does not matter
/// for the shape factor, the result is c times the shape integral.
double spec_mass(const InitialDataSpec& spec, const Domain& domain);

/// Returns a copy with c chosen so that the total mass is 1 (if spec.normalized).
InitialDataSpec normalize_spec(const InitialDataSpec& spec, const Domain& domain);

/// Pointwise f0(x, v) for the (already normalized) spec.
double f0_value(const InitialDataSpec& spec, const Vec3& x, const Vec3& v);

ParticleEnsemble sample_initial(const InitialDataSpec& spec, const Domain& domain, long N,
                                std::uint64_t seed);

struct AdvanceOptions {
  double g = 1.0;
  double tol_exit = 1e-10;
  /// Use the closed-form gravity flow from each particle's origin. Exact,
  /// time-step independent; requires u = 0 and all origins at t = 0.
  bool gravity_closed_form = false;
};

/// Advances every alive particle over [t, t + dt]. Absorbed particles move to
/// the graveyard with their exit time; weights are never rescaled.
void advance_ensemble(ParticleEnsemble& ens, double t, double dt, const VelocitySampler& u,
                      const AdvanceOptions& opt);

/// e^{3t} f0_value. Throws DeadParticle for absorbed particles.
double pointwise_value(const Particle& p, double t);

/// CIC weights of position x: periodic horizontally, clamped vertically so
/// the eight weights sum to one inside the slab.
struct CicStencil {
  std::array<long, 8> cell;
  std::array<double, 8> weight;
};
/// Returns false for positions outside 0 < x3 < Zmax.
bool cic_stencil(const GridDims& grid, const Domain& domain, const Vec3& x, CicStencil& out);

MomentField deposit_moments(const ParticleEnsemble& ens, const GridDims& grid,
                            const Domain& domain, const std::vector<double>& orders = {},
                            bool deterministic = true);

/// N_q, K_{q,r}, H_{q,m}, F_{q,m,r} of f0.
struct DecayFunctionals {
  double N = 0.0;
  double K = 0.0;
  double H = 0.0;
  double F = 0.0;
};

/// All four at once; DivergentFunctional if any of them is infinite.
DecayFunctionals decay_functionals(const InitialDataSpec& spec, const Domain& domain, double q,
                                   double m, double r);

/// The individual functionals. r = inf selects the L^inf norm.
double functional_N(const InitialDataSpec& spec, const Domain& domain, double q);
double functional_K(const InitialDataSpec& spec, const Domain& domain, double q, double r);
double functional_H(const InitialDataSpec& spec, const Domain& domain, double q, double m);
double functional_F(const InitialDataSpec& spec, const Domain& domain, double q, double m, double r);

/// Maximum over the ensemble of (1 + |v|^q) e^{3t} f0_value at time t.
double pointwise_weighted_sup(const ParticleEnsemble& ens, double q);

/// Flat binary ensemble snapshot, little-endian.
void write_ensemble_snapshot(const std::string& path, const ParticleEnsemble& ens);
ParticleEnsemble read_ensemble_snapshot(const std::string& path);

}  // namespace vns
