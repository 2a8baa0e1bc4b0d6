#pragma once

#include "vns/characteristics.hpp"
#include "vns/core.hpp"
#include "vns/kinetic.hpp"

#include <array>
#include <complex>
#include <deque>
#include <memory>
#include <string>
#include <vector>

namespace vns {

/// Staggered (MAC) velocity on the slab.
///
/// u at (i hx, (j+1/2) hy, (k+1/2) hz), v at ((i+1/2) hx, j hy, (k+1/2) hz),
/// both Nx*Ny*Nz with mirrored ghosts (-u) across the walls; w at
/// ((i+1/2) hx, (j+1/2) hy, k hz) for k = 0..Nz, with the wall faces k = 0
/// and k = Nz stored as zero. p is cell-centered.
struct FluidField {
  GridDims grid;
  Domain domain;
  GridArray u, v, w, p;
  double time = 0.0;

  static FluidField zeros(const GridDims& grid, const Domain& domain);

  double hx() const { return domain.Lx / grid.Nx; }
  double hy() const { return domain.Ly / grid.Ny; }
  double hz() const { return domain.Zmax / grid.Nz; }
  double cell_volume() const { return hx() * hy() * hz(); }

  long c(int i, int j, int k) const { return cell_index(grid, i, j, k); }
  long wf(int i, int j, int k) const { return (static_cast<long>(k) * grid.Ny + j) * grid.Nx + i; }
};

/// Face-located body force (same layout as FluidField velocity).
struct FaceForce {
  GridArray fu, fv, fw;
  static FaceForce zeros(const GridDims& grid);
};

/// Cell-centered Brinkman force density F = j - rho * u_c.
struct BrinkmanSource {
  GridDims grid;
  std::array<GridArray, 3> F;
};

/// Cell-centered average of the face velocities.
std::array<GridArray, 3> cell_centered_velocity(const FluidField& f);

BrinkmanSource build_brinkman(const MomentField& moments, const FluidField& u);

/// Adjoint of the face-to-center average: <to_faces(F), u> = <F, u_c>.
FaceForce brinkman_to_faces(const BrinkmanSource& src, const FluidField& layout);

/// Discrete norms and operators.
double kinetic_energy(const FluidField& f);          // 1/2 ||u||^2
double l2_norm_sq(const FluidField& f);              // ||u||^2
double grad_norm_sq(const FluidField& f);            // -<Lap_h u, u>
double max_divergence(const FluidField& f);
double max_speed(const FluidField& f);               // max |u_c| over cells
double max_grad(const FluidField& f);                // max Frobenius |grad u_c|
double face_inner(const FluidField& f, const FaceForce& F);  // <F, u>
double force_l2(const FluidField& layout, const FaceForce& F);
double upper_energy_fraction(const FluidField& f, double z_frac);

/// Velocity sampler built from the cell-centered average by CIC
/// interpolation (the transpose of the deposition kernel).
VelocitySampler field_sampler(const FluidField& f);

/// Time-interpolated ring buffer of cell-centered velocity snapshots.
class FieldHistory {
 public:
  FieldHistory(const GridDims& grid, const Domain& domain, std::size_t capacity);
  void push(const FluidField& f);
  std::size_t size() const { return snaps_.size(); }
  double t_first() const;
  double t_last() const;
  VelocitySampler sampler() const;

 private:
  struct Snap {
    double t;
    std::array<GridArray, 3> uc;
    double sup_u;
    double sup_grad;
  };
  GridDims grid_;
  Domain domain_;
  std::size_t capacity_;
  std::deque<std::shared_ptr<const Snap>> snaps_;
};

struct StepStats {
  double cfl = 0.0;
  double max_div = 0.0;
  double power = 0.0;  // <F, u^n>
};

/// Incompressible NS with unit viscosity and density: skew-symmetric
/// advection (AB2), Crank-Nicolson diffusion, explicit body force and a
/// Chorin projection. Helmholtz and Poisson solves are FFT in (x, y) and
/// tridiagonal in z.
class NsSolver {
 public:
  NsSolver(const GridDims& grid, const Domain& domain, double dt);
  ~NsSolver();
  NsSolver(NsSolver&&) noexcept;
  NsSolver& operator=(NsSolver&&) noexcept;

  /// Advances `f` by dt under face force `F` (nullptr for none).
  StepStats step(FluidField& f, const FaceForce* F);

  double dt() const { return dt_; }

  /// Applies the discrete Laplacian component-wise (exposed for tests).
  void laplacian(const FluidField& f, FluidField& out) const;
  /// Skew-symmetric advection term (exposed for tests).
  void advection(const FluidField& f, FluidField& out) const;
  /// Projects f onto discretely divergence-free fields; returns phi.
  GridArray project(FluidField& f) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  double dt_;
};

/// One step with a fresh solver (forward Euler advection on the first step).
FluidField ns_step(const FluidField& field, const BrinkmanSource& F, double dt);

struct FluidBudgetSample {
  double t = 0.0;
  double u_l2_sq = 0.0;
  double grad_sq = 0.0;
  double power = 0.0;  // int F . u
};

struct BudgetReport {
  double lhs = 0.0;  // ||u(t)||^2 + 2 int ||grad u||^2
  double rhs = 0.0;  // ||u(s)||^2 + 2 int F . u
  double residual = 0.0;
};

/// Strong energy inequality over samples [is, it] by the trapezoidal rule.
BudgetReport energy_budget(const std::vector<FluidBudgetSample>& samples, std::size_t is,
                           std::size_t it);

/// Initial fields: zero, shear (A sin(pi z / Zmax) e_x), cellular (discrete
/// curl of A sin(2 pi x / Lx) sin^2(pi z / Zmax) in the (x, z) plane).
FluidField initial_field(const std::string& type, double amplitude, const GridDims& grid,
                         const Domain& domain);

/// Divergence-free, wall-compatible force profile with unit discrete L2 norm.
FaceForce unit_force_profile(const GridDims& grid, const Domain& domain);

/// Smallest eigenvalue of -Lap_h for the lowest wall-compatible shear mode
/// (u = u(z) with Dirichlet walls).
double lowest_shear_eigenvalue(const GridDims& grid, const Domain& domain);

struct DecayingForceResult {
  std::vector<double> t;
  std::vector<double> u_l2;  // ||u(t)||_2
  std::vector<double> force_l2;
  double fitted_exponent = 0.0;  // slope of log ||u||^2 vs log(1 + t) on [1, t_end]
  double envelope = 0.0;         // ||u(1)||^2 2^{3/2}
  bool envelope_holds = false;
  int violations = 0;
};

/// NS driven by C (1 + t)^{-exponent} times the unit force profile.
DecayingForceResult decaying_force_experiment(double C, double exponent, double t_end, double dt,
                                              const GridDims& grid, const Domain& domain,
                                              const std::string& u0_type, double u0_amplitude);

void write_field_snapshot(const std::string& path, const FluidField& f);
FluidField read_field_snapshot(const std::string& path);

}  // namespace vns
