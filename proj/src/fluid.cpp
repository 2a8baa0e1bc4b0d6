#include "vns/fluid.hpp"

#include "binary_io.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

namespace vns {

namespace {

using cplx = std::complex<double>;
constexpr double kPi = std::numbers::pi;

inline int wrap(int i, int n) { return i < 0 ? i + n : (i >= n ? i - n : i); }

long wfaces(const GridDims& g) { return static_cast<long>(g.Nx) * g.Ny * (g.Nz + 1); }

}  // namespace

FluidField FluidField::zeros(const GridDims& grid, const Domain& domain) {
  FluidField f;
  f.grid = grid;
  f.domain = domain;
  f.u = GridArray::Zero(grid.cells());
  f.v = GridArray::Zero(grid.cells());
  f.w = GridArray::Zero(wfaces(grid));
  f.p = GridArray::Zero(grid.cells());
  return f;
}

FaceForce FaceForce::zeros(const GridDims& grid) {
  FaceForce F;
  F.fu = GridArray::Zero(grid.cells());
  F.fv = GridArray::Zero(grid.cells());
  F.fw = GridArray::Zero(wfaces(grid));
  return F;
}

std::array<GridArray, 3> cell_centered_velocity(const FluidField& f) {
  const auto& g = f.grid;
  std::array<GridArray, 3> uc;
  for (auto& a : uc) a.resize(g.cells());
  for (int k = 0; k < g.Nz; ++k)
    for (int j = 0; j < g.Ny; ++j)
      for (int i = 0; i < g.Nx; ++i) {
        const long c = f.c(i, j, k);
        uc[0][c] = 0.5 * (f.u[c] + f.u[f.c(wrap(i + 1, g.Nx), j, k)]);
        uc[1][c] = 0.5 * (f.v[c] + f.v[f.c(i, wrap(j + 1, g.Ny), k)]);
        uc[2][c] = 0.5 * (f.w[f.wf(i, j, k)] + f.w[f.wf(i, j, k + 1)]);
      }
  return uc;
}

BrinkmanSource build_brinkman(const MomentField& m, const FluidField& u) {
  if (!(m.grid == u.grid) || m.domain.Lx != u.domain.Lx || m.domain.Ly != u.domain.Ly ||
      m.domain.Zmax != u.domain.Zmax)
    throw Error(Errc::GridMismatch, "moments and fluid live on different grids");
  const auto uc = cell_centered_velocity(u);
  BrinkmanSource s;
  s.grid = u.grid;
  for (int d = 0; d < 3; ++d) s.F[d] = m.j[d] - m.rho * uc[d];
  return s;
}

FaceForce brinkman_to_faces(const BrinkmanSource& src, const FluidField& f) {
  if (!(src.grid == f.grid)) throw Error(Errc::GridMismatch, "force and fluid grids differ");
  const auto& g = f.grid;
  FaceForce F = FaceForce::zeros(g);
  for (int k = 0; k < g.Nz; ++k)
    for (int j = 0; j < g.Ny; ++j)
      for (int i = 0; i < g.Nx; ++i) {
        const long c = f.c(i, j, k);
        F.fu[c] = 0.5 * (src.F[0][f.c(wrap(i - 1, g.Nx), j, k)] + src.F[0][c]);
        F.fv[c] = 0.5 * (src.F[1][f.c(i, wrap(j - 1, g.Ny), k)] + src.F[1][c]);
        if (k > 0) F.fw[f.wf(i, j, k)] = 0.5 * (src.F[2][f.c(i, j, k - 1)] + src.F[2][c]);
      }
  return F;
}

double l2_norm_sq(const FluidField& f) {
  return (f.u.square().sum() + f.v.square().sum() + f.w.square().sum()) * f.cell_volume();
}

double kinetic_energy(const FluidField& f) { return 0.5 * l2_norm_sq(f); }

double face_inner(const FluidField& f, const FaceForce& F) {
  return ((F.fu * f.u).sum() + (F.fv * f.v).sum() + (F.fw * f.w).sum()) * f.cell_volume();
}

double force_l2(const FluidField& f, const FaceForce& F) {
  return std::sqrt((F.fu.square().sum() + F.fv.square().sum() + F.fw.square().sum()) *
                   f.cell_volume());
}

double max_divergence(const FluidField& f) {
  const auto& g = f.grid;
  const double hx = f.hx(), hy = f.hy(), hz = f.hz();
  double m = 0.0;
  for (int k = 0; k < g.Nz; ++k)
    for (int j = 0; j < g.Ny; ++j)
      for (int i = 0; i < g.Nx; ++i) {
        const double d = (f.u[f.c(wrap(i + 1, g.Nx), j, k)] - f.u[f.c(i, j, k)]) / hx +
                         (f.v[f.c(i, wrap(j + 1, g.Ny), k)] - f.v[f.c(i, j, k)]) / hy +
                         (f.w[f.wf(i, j, k + 1)] - f.w[f.wf(i, j, k)]) / hz;
        m = std::max(m, std::abs(d));
      }
  return m;
}

double max_speed(const FluidField& f) {
  const auto uc = cell_centered_velocity(f);
  return (uc[0].square() + uc[1].square() + uc[2].square()).sqrt().maxCoeff();
}

namespace {

// Frobenius norm of the cell-centered gradient of u_c. Vertical differences
// use mirrored ghosts at the walls (u_c = 0 on the wall).
GridArray grad_frobenius(const FluidField& f) {
  const auto& g = f.grid;
  const auto uc = cell_centered_velocity(f);
  const double hx = f.hx(), hy = f.hy(), hz = f.hz();
  GridArray out(g.cells());
  for (int k = 0; k < g.Nz; ++k)
    for (int j = 0; j < g.Ny; ++j)
      for (int i = 0; i < g.Nx; ++i) {
        double s = 0.0;
        for (int d = 0; d < 3; ++d) {
          const auto& a = uc[d];
          const double dx = (a[f.c(wrap(i + 1, g.Nx), j, k)] - a[f.c(wrap(i - 1, g.Nx), j, k)]) / (2 * hx);
          const double dy = (a[f.c(i, wrap(j + 1, g.Ny), k)] - a[f.c(i, wrap(j - 1, g.Ny), k)]) / (2 * hy);
          const double up = k + 1 < g.Nz ? a[f.c(i, j, k + 1)] : -a[f.c(i, j, k)];
          const double dn = k > 0 ? a[f.c(i, j, k - 1)] : -a[f.c(i, j, k)];
          const double dz = (up - dn) / (2 * hz);
          s += dx * dx + dy * dy + dz * dz;
        }
        out[f.c(i, j, k)] = std::sqrt(s);
      }
  return out;
}

}  // namespace

double max_grad(const FluidField& f) { return grad_frobenius(f).maxCoeff(); }

double upper_energy_fraction(const FluidField& f, double z_frac) {
  const double total = l2_norm_sq(f);
  if (!(total > 0.0)) return 0.0;
  const auto uc = cell_centered_velocity(f);
  const auto& g = f.grid;
  const double hz = f.hz();
  const double zcut = z_frac * f.domain.Zmax;
  double upper = 0.0, all = 0.0;
  for (int k = 0; k < g.Nz; ++k)
    for (int j = 0; j < g.Ny; ++j)
      for (int i = 0; i < g.Nx; ++i) {
        const long c = f.c(i, j, k);
        const double e = uc[0][c] * uc[0][c] + uc[1][c] * uc[1][c] + uc[2][c] * uc[2][c];
        all += e;
        if ((k + 0.5) * hz > zcut) upper += e;
      }
  return all > 0.0 ? upper / all : 0.0;
}

namespace {

Vec3 interpolate_cells(const std::array<GridArray, 3>& uc, const GridDims& g, const Domain& d,
                       const Vec3& x) {
  CicStencil st;
  if (!cic_stencil(g, d, x, st)) return Vec3::Zero();
  Vec3 out = Vec3::Zero();
  for (int s = 0; s < 8; ++s)
    for (int c = 0; c < 3; ++c) out[c] += st.weight[s] * uc[c][st.cell[s]];
  return out;
}

template <class ValueAt>
Mat3 fd_gradient(ValueAt&& val, const Vec3& x, double h) {
  Mat3 J;
  for (int j = 0; j < 3; ++j) {
    Vec3 xp = x, xm = x;
    xp[j] += h;
    xm[j] -= h;
    J.col(j) = (val(xp) - val(xm)) / (2.0 * h);
  }
  return J;
}

}  // namespace

VelocitySampler field_sampler(const FluidField& f) {
  auto uc = std::make_shared<const std::array<GridArray, 3>>(cell_centered_velocity(f));
  const GridDims g = f.grid;
  const Domain d = f.domain;
  const double h = 1e-6 * std::min({f.hx(), f.hy(), f.hz()});
  VelocitySampler s(
      [uc, g, d](double, const Vec3& x) { return interpolate_cells(*uc, g, d, x); },
      [uc, g, d, h](double, const Vec3& x) {
        return fd_gradient([&](const Vec3& y) { return interpolate_cells(*uc, g, d, y); }, x, h);
      });
  const double su = max_speed(f);
  const double sg = max_grad(f);
  s.set_sup_norms([su](double) { return su; }, [sg](double) { return sg; });
  return s;
}

FieldHistory::FieldHistory(const GridDims& grid, const Domain& domain, std::size_t capacity)
    : grid_(grid), domain_(domain), capacity_(std::max<std::size_t>(capacity, 2)) {}

void FieldHistory::push(const FluidField& f) {
  if (!(f.grid == grid_)) throw Error(Errc::GridMismatch, "history grid mismatch");
  if (!snaps_.empty() && !(f.time > snaps_.back()->t))
    throw Error(Errc::FieldHistoryUnavailable, "history snapshots must be pushed in time order");
  auto s = std::make_shared<Snap>();
  s->t = f.time;
  s->uc = cell_centered_velocity(f);
  s->sup_u = max_speed(f);
  s->sup_grad = max_grad(f);
  snaps_.push_back(std::move(s));
  while (snaps_.size() > capacity_) snaps_.pop_front();
}

double FieldHistory::t_first() const {
  if (snaps_.empty()) throw Error(Errc::FieldHistoryUnavailable, "empty field history");
  return snaps_.front()->t;
}

double FieldHistory::t_last() const {
  if (snaps_.empty()) throw Error(Errc::FieldHistoryUnavailable, "empty field history");
  return snaps_.back()->t;
}

VelocitySampler FieldHistory::sampler() const {
  if (snaps_.empty()) throw Error(Errc::FieldHistoryUnavailable, "empty field history");
  using List = std::vector<std::shared_ptr<const Snap>>;
  auto list = std::make_shared<const List>(snaps_.begin(), snaps_.end());
  const GridDims g = grid_;
  const Domain d = domain_;
  // Bracketing snapshots and blend weight for time t.
  auto locate = [list](double t, std::size_t& a, double& theta) {
    const auto& L = *list;
    if (L.size() == 1 || t <= L.front()->t) {
      a = 0;
      theta = 0.0;
      return;
    }
    if (t >= L.back()->t) {
      a = L.size() - 2;
      theta = 1.0;
      return;
    }
    auto it = std::upper_bound(L.begin(), L.end(), t,
                               [](double tt, const std::shared_ptr<const Snap>& s) { return tt < s->t; });
    a = static_cast<std::size_t>(it - L.begin()) - 1;
    theta = (t - L[a]->t) / (L[a + 1]->t - L[a]->t);
  };
  auto value = [list, g, d, locate](double t, const Vec3& x) {
    std::size_t a;
    double th;
    locate(t, a, th);
    const auto& L = *list;
    const Vec3 ua = interpolate_cells(L[a]->uc, g, d, x);
    if (th == 0.0 || L.size() == 1) return ua;
    const Vec3 ub = interpolate_cells(L[a + 1]->uc, g, d, x);
    return Vec3((1.0 - th) * ua + th * ub);
  };
  const double h = 1e-6 * std::min({d.Lx / g.Nx, d.Ly / g.Ny, d.Zmax / g.Nz});
  VelocitySampler s(value,
                    [value, h](double t, const Vec3& x) {
                      return fd_gradient([&](const Vec3& y) { return value(t, y); }, x, h);
                    },
                    list->front()->t, list->back()->t);
  auto norm_at = [list, locate](double t, bool grad) {
    std::size_t a;
    double th;
    locate(t, a, th);
    const auto& L = *list;
    const double va = grad ? L[a]->sup_grad : L[a]->sup_u;
    if (L.size() == 1) return va;
    const double vb = grad ? L[a + 1]->sup_grad : L[a + 1]->sup_u;
    return std::max(va, vb);
  };
  s.set_sup_norms([norm_at](double t) { return norm_at(t, false); },
                  [norm_at](double t) { return norm_at(t, true); });
  return s;
}

// ---------------------------------------------------------------------------
// Solver

namespace {

enum class VerticalBc { CenterDirichlet, FaceDirichlet, CenterNeumann };

}  // namespace

struct NsSolver::Impl {
  GridDims g;
  Domain d;
  double hx, hy, hz;
  Eigen::FFT<double> fft;
  std::vector<double> lam_x, lam_y;
  FluidField adv_prev;
  bool have_prev = false;

  Impl(const GridDims& grid, const Domain& dom) : g(grid), d(dom) {
    hx = d.Lx / g.Nx;
    hy = d.Ly / g.Ny;
    hz = d.Zmax / g.Nz;
    lam_x.resize(g.Nx);
    lam_y.resize(g.Ny);
    for (int i = 0; i < g.Nx; ++i) {
      const double s = std::sin(kPi * i / g.Nx);
      lam_x[i] = -4.0 * s * s / (hx * hx);
    }
    for (int j = 0; j < g.Ny; ++j) {
      const double s = std::sin(kPi * j / g.Ny);
      lam_y[j] = -4.0 * s * s / (hy * hy);
    }
  }

  void fft2(const double* in, std::vector<cplx>& out) {
    const int nx = g.Nx, ny = g.Ny;
    out.assign(static_cast<std::size_t>(nx) * ny, 0.0);
    std::vector<cplx> row(nx), rowh, col(ny), colh;
    for (int j = 0; j < ny; ++j) {
      for (int i = 0; i < nx; ++i) row[i] = in[j * nx + i];
      fft.fwd(rowh, row);
      for (int i = 0; i < nx; ++i) out[j * nx + i] = rowh[i];
    }
    for (int i = 0; i < nx; ++i) {
      for (int j = 0; j < ny; ++j) col[j] = out[j * nx + i];
      fft.fwd(colh, col);
      for (int j = 0; j < ny; ++j) out[j * nx + i] = colh[j];
    }
  }

  void ifft2(std::vector<cplx>& data, double* out) {
    const int nx = g.Nx, ny = g.Ny;
    std::vector<cplx> col(ny), colt, row(nx), rowt;
    for (int i = 0; i < nx; ++i) {
      for (int j = 0; j < ny; ++j) col[j] = data[j * nx + i];
      fft.inv(colt, col);
      for (int j = 0; j < ny; ++j) data[j * nx + i] = colt[j];
    }
    for (int j = 0; j < ny; ++j) {
      for (int i = 0; i < nx; ++i) row[i] = data[j * nx + i];
      fft.inv(rowt, row);
      for (int i = 0; i < nx; ++i) out[j * nx + i] = rowt[i].real();
    }
  }

  // Solves (c0 I + c1 Lap_h) phi = rhs on levels [first, first + n) of a
  // level-major array, in place.
  void solve(GridArray& data, int first, int n, VerticalBc bc, double c0, double c1) {
    const long plane = static_cast<long>(g.Nx) * g.Ny;
    std::vector<std::vector<cplx>> hat(n);
    for (int l = 0; l < n; ++l) fft2(data.data() + (first + l) * plane, hat[l]);
    const double iz2 = 1.0 / (hz * hz);
    std::vector<double> a(n), b(n), c(n);
    std::vector<cplx> r(n), cp(n), dp(n);
    for (int jy = 0; jy < g.Ny; ++jy)
      for (int ix = 0; ix < g.Nx; ++ix) {
        const long m = static_cast<long>(jy) * g.Nx + ix;
        const double lh = lam_x[ix] + lam_y[jy];
        for (int l = 0; l < n; ++l) {
          double dv = -2.0 * iz2;
          if (l == 0 || l == n - 1) {
            if (bc == VerticalBc::CenterDirichlet) dv = (n == 1 ? -4.0 : -3.0) * iz2;
            else if (bc == VerticalBc::CenterNeumann) dv = (n == 1 ? 0.0 : -1.0) * iz2;
          }
          a[l] = l > 0 ? c1 * iz2 : 0.0;
          c[l] = l < n - 1 ? c1 * iz2 : 0.0;
          b[l] = c0 + c1 * (lh + dv);
          r[l] = hat[l][m];
        }
        if (bc == VerticalBc::CenterNeumann && ix == 0 && jy == 0 && c0 == 0.0) {
          b[0] = 1.0;
          c[0] = 0.0;
          r[0] = 0.0;
        }
        // Thomas algorithm.
        cp[0] = c[0] / b[0];
        dp[0] = r[0] / b[0];
        for (int l = 1; l < n; ++l) {
          const cplx den = b[l] - a[l] * cp[l - 1];
          cp[l] = c[l] / den;
          dp[l] = (r[l] - a[l] * dp[l - 1]) / den;
        }
        hat[n - 1][m] = dp[n - 1];
        for (int l = n - 2; l >= 0; --l) hat[l][m] = dp[l] - cp[l] * hat[l + 1][m];
      }
    for (int l = 0; l < n; ++l) ifft2(hat[l], data.data() + (first + l) * plane);
  }
};

NsSolver::NsSolver(const GridDims& grid, const Domain& domain, double dt)
    : impl_(std::make_unique<Impl>(grid, domain)), dt_(dt) {
  if (!(dt > 0.0)) throw Error(Errc::InvalidTimeStep, "dt must be positive");
}

NsSolver::~NsSolver() = default;
NsSolver::NsSolver(NsSolver&&) noexcept = default;
NsSolver& NsSolver::operator=(NsSolver&&) noexcept = default;

void NsSolver::laplacian(const FluidField& f, FluidField& out) const {
  const auto& g = f.grid;
  const double ix2 = 1.0 / (f.hx() * f.hx()), iy2 = 1.0 / (f.hy() * f.hy()),
               iz2 = 1.0 / (f.hz() * f.hz());
  out = FluidField::zeros(g, f.domain);
  out.time = f.time;
  for (int k = 0; k < g.Nz; ++k)
    for (int j = 0; j < g.Ny; ++j)
      for (int i = 0; i < g.Nx; ++i) {
        const long c = f.c(i, j, k);
        const long xp = f.c(wrap(i + 1, g.Nx), j, k), xm = f.c(wrap(i - 1, g.Nx), j, k);
        const long yp = f.c(i, wrap(j + 1, g.Ny), k), ym = f.c(i, wrap(j - 1, g.Ny), k);
        for (int comp = 0; comp < 2; ++comp) {
          const GridArray& a = comp == 0 ? f.u : f.v;
          const double up = k + 1 < g.Nz ? a[f.c(i, j, k + 1)] : -a[c];
          const double dn = k > 0 ? a[f.c(i, j, k - 1)] : -a[c];
          const double val = (a[xp] - 2 * a[c] + a[xm]) * ix2 + (a[yp] - 2 * a[c] + a[ym]) * iy2 +
                             (up - 2 * a[c] + dn) * iz2;
          (comp == 0 ? out.u : out.v)[c] = val;
        }
      }
  for (int k = 1; k < g.Nz; ++k)
    for (int j = 0; j < g.Ny; ++j)
      for (int i = 0; i < g.Nx; ++i) {
        const auto& a = f.w;
        const long c = f.wf(i, j, k);
        out.w[c] = (a[f.wf(wrap(i + 1, g.Nx), j, k)] - 2 * a[c] + a[f.wf(wrap(i - 1, g.Nx), j, k)]) * ix2 +
                   (a[f.wf(i, wrap(j + 1, g.Ny), k)] - 2 * a[c] + a[f.wf(i, wrap(j - 1, g.Ny), k)]) * iy2 +
                   (a[f.wf(i, j, k + 1)] - 2 * a[c] + a[f.wf(i, j, k - 1)]) * iz2;
      }
}

double grad_norm_sq(const FluidField& f) {
  NsSolver s(f.grid, f.domain, 1.0);
  FluidField lap;
  s.laplacian(f, lap);
  return -((lap.u * f.u).sum() + (lap.v * f.v).sum() + (lap.w * f.w).sum()) * f.cell_volume();
}

void NsSolver::advection(const FluidField& f, FluidField& out) const {
  // Skew-symmetric form: for each component phi at node n and each
  // direction, (U_{n+} phi_{n+} - U_{n-} phi_{n-}) / (2 h), with U the
  // advecting velocity interpolated to the midpoint between the two nodes.
  // Each face term appears with opposite signs in its two nodes, so
  // <N(u), u> = 0 exactly.
  const auto& g = f.grid;
  const double hx2 = 2 * f.hx(), hy2 = 2 * f.hy(), hz2 = 2 * f.hz();
  out = FluidField::zeros(g, f.domain);
  out.time = f.time;
  const auto& U = f.u;
  const auto& V = f.v;
  const auto& W = f.w;
  auto C = [&](int i, int j, int k) { return f.c(wrap(i, g.Nx), wrap(j, g.Ny), k); };
  auto Wf = [&](int i, int j, int k) { return f.wf(wrap(i, g.Nx), wrap(j, g.Ny), k); };
  for (int k = 0; k < g.Nz; ++k)
    for (int j = 0; j < g.Ny; ++j)
      for (int i = 0; i < g.Nx; ++i) {
        const long c = C(i, j, k);
        // u-component at (i, j+1/2, k+1/2).
        {
          const double uxp = 0.5 * (U[c] + U[C(i + 1, j, k)]);
          const double uxm = 0.5 * (U[C(i - 1, j, k)] + U[c]);
          const double vyp = 0.5 * (V[C(i - 1, j + 1, k)] + V[C(i, j + 1, k)]);
          const double vym = 0.5 * (V[C(i - 1, j, k)] + V[C(i, j, k)]);
          const double wzp = 0.5 * (W[Wf(i - 1, j, k + 1)] + W[Wf(i, j, k + 1)]);
          const double wzm = 0.5 * (W[Wf(i - 1, j, k)] + W[Wf(i, j, k)]);
          const double up = k + 1 < g.Nz ? U[C(i, j, k + 1)] : -U[c];
          const double dn = k > 0 ? U[C(i, j, k - 1)] : -U[c];
          out.u[c] = (uxp * U[C(i + 1, j, k)] - uxm * U[C(i - 1, j, k)]) / hx2 +
                     (vyp * U[C(i, j + 1, k)] - vym * U[C(i, j - 1, k)]) / hy2 +
                     (wzp * up - wzm * dn) / hz2;
        }
        // v-component at (i+1/2, j, k+1/2).
        {
          const double uxp = 0.5 * (U[C(i + 1, j - 1, k)] + U[C(i + 1, j, k)]);
          const double uxm = 0.5 * (U[C(i, j - 1, k)] + U[C(i, j, k)]);
          const double vyp = 0.5 * (V[c] + V[C(i, j + 1, k)]);
          const double vym = 0.5 * (V[C(i, j - 1, k)] + V[c]);
          const double wzp = 0.5 * (W[Wf(i, j - 1, k + 1)] + W[Wf(i, j, k + 1)]);
          const double wzm = 0.5 * (W[Wf(i, j - 1, k)] + W[Wf(i, j, k)]);
          const double up = k + 1 < g.Nz ? V[C(i, j, k + 1)] : -V[c];
          const double dn = k > 0 ? V[C(i, j, k - 1)] : -V[c];
          out.v[c] = (uxp * V[C(i + 1, j, k)] - uxm * V[C(i - 1, j, k)]) / hx2 +
                     (vyp * V[C(i, j + 1, k)] - vym * V[C(i, j - 1, k)]) / hy2 +
                     (wzp * up - wzm * dn) / hz2;
        }
        // w-component at (i+1/2, j+1/2, k), interior faces only.
        if (k > 0) {
          const long wc = Wf(i, j, k);
          const double uxp = 0.5 * (U[C(i + 1, j, k - 1)] + U[C(i + 1, j, k)]);
          const double uxm = 0.5 * (U[C(i, j, k - 1)] + U[C(i, j, k)]);
          const double vyp = 0.5 * (V[C(i, j + 1, k - 1)] + V[C(i, j + 1, k)]);
          const double vym = 0.5 * (V[C(i, j, k - 1)] + V[C(i, j, k)]);
          const double wzp = 0.5 * (W[wc] + W[Wf(i, j, k + 1)]);
          const double wzm = 0.5 * (W[Wf(i, j, k - 1)] + W[wc]);
          out.w[wc] = (uxp * W[Wf(i + 1, j, k)] - uxm * W[Wf(i - 1, j, k)]) / hx2 +
                      (vyp * W[Wf(i, j + 1, k)] - vym * W[Wf(i, j - 1, k)]) / hy2 +
                      (wzp * W[Wf(i, j, k + 1)] - wzm * W[Wf(i, j, k - 1)]) / hz2;
        }
      }
}

GridArray NsSolver::project(FluidField& f) const {
  const auto& g = f.grid;
  const double hx = f.hx(), hy = f.hy(), hz = f.hz();
  GridArray phi(g.cells());
  for (int k = 0; k < g.Nz; ++k)
    for (int j = 0; j < g.Ny; ++j)
      for (int i = 0; i < g.Nx; ++i)
        phi[f.c(i, j, k)] = (f.u[f.c(wrap(i + 1, g.Nx), j, k)] - f.u[f.c(i, j, k)]) / hx +
                            (f.v[f.c(i, wrap(j + 1, g.Ny), k)] - f.v[f.c(i, j, k)]) / hy +
                            (f.w[f.wf(i, j, k + 1)] - f.w[f.wf(i, j, k)]) / hz;
  impl_->solve(phi, 0, g.Nz, VerticalBc::CenterNeumann, 0.0, 1.0);
  if (!phi.allFinite()) throw Error(Errc::SolverDivergence, "pressure solve produced non-finite values");
  for (int k = 0; k < g.Nz; ++k)
    for (int j = 0; j < g.Ny; ++j)
      for (int i = 0; i < g.Nx; ++i) {
        const long c = f.c(i, j, k);
        f.u[c] -= (phi[c] - phi[f.c(wrap(i - 1, g.Nx), j, k)]) / hx;
        f.v[c] -= (phi[c] - phi[f.c(i, wrap(j - 1, g.Ny), k)]) / hy;
        if (k > 0) f.w[f.wf(i, j, k)] -= (phi[c] - phi[f.c(i, j, k - 1)]) / hz;
      }
  return phi;
}

StepStats NsSolver::step(FluidField& f, const FaceForce* F) {
  const auto& g = f.grid;
  if (!(g == impl_->g)) throw Error(Errc::GridMismatch, "solver and field grids differ");
  StepStats st;
  const double dt = dt_;
  st.cfl = dt * std::max({f.u.abs().maxCoeff() / f.hx(), f.v.abs().maxCoeff() / f.hy(),
                          f.w.abs().maxCoeff() / f.hz()});
  if (st.cfl > 0.5)
    throw Error(Errc::CflViolation, "CFL number " + format_double(st.cfl) + " exceeds 0.5");
  if (F) st.power = face_inner(f, *F);

  FluidField adv, lap;
  advection(f, adv);
  laplacian(f, lap);
  FluidField rhs = f;
  auto combine = [&](GridArray& out, const GridArray& a, const GridArray& ap, const GridArray& l,
                     const GridArray* force) {
    if (impl_->have_prev) out += dt * (-(1.5 * a - 0.5 * ap));
    else out += dt * (-a);
    out += 0.5 * dt * l;
    if (force) out += dt * (*force);
  };
  const FluidField& prev = impl_->have_prev ? impl_->adv_prev : adv;
  combine(rhs.u, adv.u, prev.u, lap.u, F ? &F->fu : nullptr);
  combine(rhs.v, adv.v, prev.v, lap.v, F ? &F->fv : nullptr);
  combine(rhs.w, adv.w, prev.w, lap.w, F ? &F->fw : nullptr);
  const long plane = static_cast<long>(g.Nx) * g.Ny;
  rhs.w.head(plane).setZero();
  rhs.w.tail(plane).setZero();

  impl_->solve(rhs.u, 0, g.Nz, VerticalBc::CenterDirichlet, 1.0, -0.5 * dt);
  impl_->solve(rhs.v, 0, g.Nz, VerticalBc::CenterDirichlet, 1.0, -0.5 * dt);
  impl_->solve(rhs.w, 1, g.Nz - 1, VerticalBc::FaceDirichlet, 1.0, -0.5 * dt);
  if (!rhs.u.allFinite() || !rhs.v.allFinite() || !rhs.w.allFinite())
    throw Error(Errc::SolverDivergence, "diffusion solve produced non-finite values");

  const GridArray phi = project(rhs);
  rhs.p = phi / dt;
  rhs.time = f.time + dt;
  st.max_div = max_divergence(rhs);
  impl_->adv_prev = std::move(adv);
  impl_->have_prev = true;
  f = std::move(rhs);
  return st;
}

FluidField ns_step(const FluidField& field, const BrinkmanSource& F, double dt) {
  NsSolver s(field.grid, field.domain, dt);
  FluidField out = field;
  const FaceForce ff = brinkman_to_faces(F, field);
  s.step(out, &ff);
  return out;
}

BudgetReport energy_budget(const std::vector<FluidBudgetSample>& s, std::size_t is,
                           std::size_t it) {
  if (is > it || it >= s.size()) throw Error(Errc::DomainError, "budget sample range is invalid");
  double diss = 0.0, pow = 0.0;
  for (std::size_t n = is; n < it; ++n) {
    const double h = s[n + 1].t - s[n].t;
    diss += 0.5 * h * (s[n].grad_sq + s[n + 1].grad_sq);
    pow += 0.5 * h * (s[n].power + s[n + 1].power);
  }
  BudgetReport r;
  r.lhs = s[it].u_l2_sq + 2.0 * diss;
  r.rhs = s[is].u_l2_sq + 2.0 * pow;
  r.residual = r.lhs - r.rhs;
  return r;
}

FluidField initial_field(const std::string& type, double A, const GridDims& g, const Domain& d) {
  FluidField f = FluidField::zeros(g, d);
  const double hx = f.hx(), hz = f.hz();
  if (type == "zero") return f;
  if (type == "shear") {
    for (int k = 0; k < g.Nz; ++k)
      for (int j = 0; j < g.Ny; ++j)
        for (int i = 0; i < g.Nx; ++i) f.u[f.c(i, j, k)] = A * std::sin(kPi * (k + 0.5) * hz / d.Zmax);
    return f;
  }
  if (type == "cellular") {
    const double kx = 2.0 * kPi / d.Lx;
    auto psi = [&](int i, int k) {
      const double s = std::sin(kPi * k * hz / d.Zmax);
      return A / kx * std::sin(kx * i * hx) * s * s;
    };
    for (int k = 0; k < g.Nz; ++k)
      for (int j = 0; j < g.Ny; ++j)
        for (int i = 0; i < g.Nx; ++i) f.u[f.c(i, j, k)] = -(psi(i, k + 1) - psi(i, k)) / hz;
    for (int k = 1; k < g.Nz; ++k)
      for (int j = 0; j < g.Ny; ++j)
        for (int i = 0; i < g.Nx; ++i) f.w[f.wf(i, j, k)] = (psi(i + 1, k) - psi(i, k)) / hx;
    return f;
  }
  throw Error(Errc::InvalidConfig, "unknown initial field type '" + type + "'");
}

FaceForce unit_force_profile(const GridDims& g, const Domain& d) {
  FluidField layout = FluidField::zeros(g, d);
  FaceForce F = FaceForce::zeros(g);
  const double hz = layout.hz();
  for (int k = 0; k < g.Nz; ++k)
    for (int j = 0; j < g.Ny; ++j)
      for (int i = 0; i < g.Nx; ++i) F.fu[layout.c(i, j, k)] = std::sin(kPi * (k + 0.5) * hz / d.Zmax);
  const double n = force_l2(layout, F);
  F.fu /= n;
  return F;
}

double lowest_shear_eigenvalue(const GridDims& g, const Domain& d) {
  const double hz = d.Zmax / g.Nz;
  const double s = std::sin(kPi / (2.0 * g.Nz));
  return 4.0 * s * s / (hz * hz);
}

DecayingForceResult decaying_force_experiment(double C, double exponent, double t_end, double dt,
                                              const GridDims& grid, const Domain& domain,
                                              const std::string& u0_type, double u0_amplitude) {
  NsSolver solver(grid, domain, dt);
  FluidField f = initial_field(u0_type, u0_amplitude, grid, domain);
  const FaceForce unit = unit_force_profile(grid, domain);
  DecayingForceResult r;
  const long n = std::lround(t_end / dt);
  FaceForce F = unit;
  auto record = [&](double t, double amp) {
    r.t.push_back(t);
    r.u_l2.push_back(std::sqrt(l2_norm_sq(f)));
    r.force_l2.push_back(std::abs(amp));
  };
  for (long s = 0; s <= n; ++s) {
    const double t = s * dt;
    const double amp = C * std::pow(1.0 + t, -exponent);
    record(t, amp);
    if (s == n) break;
    F.fu = unit.fu * amp;
    F.fv = unit.fv * amp;
    F.fw = unit.fw * amp;
    solver.step(f, &F);
  }
  // Envelope from t = 1 and a log-log slope of ||u||^2 over [1, t_end].
  std::size_t i1 = 0;
  while (i1 < r.t.size() && r.t[i1] < 1.0 - 1e-9) ++i1;
  if (i1 >= r.t.size()) return r;
  r.envelope = r.u_l2[i1] * r.u_l2[i1] * std::pow(2.0, 1.5);
  r.violations = 0;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int cnt = 0;
  for (std::size_t i = i1; i < r.t.size(); ++i) {
    const double e2 = r.u_l2[i] * r.u_l2[i];
    if (e2 > r.envelope * std::pow(1.0 + r.t[i], -1.5)) ++r.violations;
    if (e2 > 0.0) {
      const double x = std::log1p(r.t[i]);
      const double y = std::log(e2);
      sx += x;
      sy += y;
      sxx += x * x;
      sxy += x * y;
      ++cnt;
    }
  }
  if (cnt >= 2) r.fitted_exponent = (cnt * sxy - sx * sy) / (cnt * sxx - sx * sx);
  r.envelope_holds = r.violations == 0;
  return r;
}

void write_field_snapshot(const std::string& path, const FluidField& f) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(Errc::IoError, "cannot write '" + path + "'");
  os.write("VNSF", 4);
  detail::put_u32(os, 1);
  detail::put_u32(os, static_cast<std::uint32_t>(f.grid.Nx));
  detail::put_u32(os, static_cast<std::uint32_t>(f.grid.Ny));
  detail::put_u32(os, static_cast<std::uint32_t>(f.grid.Nz));
  detail::put_f64(os, f.domain.Lx);
  detail::put_f64(os, f.domain.Ly);
  detail::put_f64(os, f.domain.Zmax);
  detail::put_f64(os, f.time);
  for (const GridArray* a : {&f.u, &f.v, &f.w, &f.p})
    for (Eigen::Index i = 0; i < a->size(); ++i) detail::put_f64(os, (*a)[i]);
  if (!os) throw Error(Errc::IoError, "write failed for '" + path + "'");
}

FluidField read_field_snapshot(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(Errc::IoError, "cannot read '" + path + "'");
  char magic[4];
  if (!is.read(magic, 4) || std::string(magic, 4) != "VNSF")
    throw Error(Errc::IoError, "bad field snapshot magic");
  if (detail::get_u32(is) != 1) throw Error(Errc::IoError, "unsupported snapshot version");
  GridDims g;
  g.Nx = static_cast<int>(detail::get_u32(is));
  g.Ny = static_cast<int>(detail::get_u32(is));
  g.Nz = static_cast<int>(detail::get_u32(is));
  Domain d;
  d.Lx = detail::get_f64(is);
  d.Ly = detail::get_f64(is);
  d.Zmax = detail::get_f64(is);
  FluidField f = FluidField::zeros(g, d);
  f.time = detail::get_f64(is);
  for (GridArray* a : {&f.u, &f.v, &f.w, &f.p})
    for (Eigen::Index i = 0; i < a->size(); ++i) (*a)[i] = detail::get_f64(is);
  return f;
}

}  // namespace vns
