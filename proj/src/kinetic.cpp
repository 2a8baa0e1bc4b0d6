#include "vns/kinetic.hpp"

#include "binary_io.hpp"
#include "numerics.hpp"
#include "vns/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <mutex>
#include <numbers>

namespace vns {

namespace {

constexpr double kPi = std::numbers::pi;

// Integral of h over (0, upper) for integrands with a knee near 1 and
// algebraic tails: [0, 1] directly, the rest in log or inverse variables.
template <class F>
double integrate_knee(F&& h, double upper) {
  const double b = std::min(1.0, upper);
  double s = detail::integrate_finite(0.0, b, h);
  if (upper > 1.0) {
    if (std::isinf(upper)) {
      s += detail::integrate_finite(0.0, 1.0, [&](double t) { return h(1.0 / t) / (t * t); });
    } else {
      s += detail::integrate_finite(0.0, std::log(upper), [&](double u) {
        const double r = std::exp(u);
        return h(r) * r;
      });
    }
  }
  return s;
}

void check_poly(const InitialDataSpec& s) {
  if (!(s.Rmax > 0.0) || !(s.Lmax > 0.0))
    throw Error(Errc::UnnormalizableSpec, "poly_decay truncations must be positive");
  if (std::isinf(s.Rmax) && !(s.q > 3.0))
    throw Error(Errc::UnnormalizableSpec, "poly_decay needs q > 3 for finite mass");
  if (std::isinf(s.Lmax) && !(s.m > 1.0))
    throw Error(Errc::UnnormalizableSpec, "poly_decay needs m > 1 for finite mass");
}

double poly_velocity_shape(const InitialDataSpec& s, double weight_q) {
  return integrate_knee(
      [&](double r) {
        const double wq = weight_q > 0.0 ? 1.0 + std::pow(r, weight_q) : 1.0;
        return 4.0 * kPi * r * r * wq / (1.0 + std::pow(r, s.q));
      },
      s.Rmax);
}

}  // namespace

double ParticleEnsemble::alive_mass() const {
  double m = 0.0;
  for (const auto& p : particles) m += p.weight;
  return m;
}

double spec_mass(const InitialDataSpec& s, const Domain& d) {
  if (s.family == DataFamily::box) {
    if (!(s.L > 0.0) || !(s.R > 0.0))
      throw Error(Errc::UnnormalizableSpec, "box data needs L, R > 0");
    return s.c * d.area() * s.L * 4.0 * kPi / 3.0 * s.R * s.R * s.R;
  }
  check_poly(s);
  const double Iv = poly_velocity_shape(s, 0.0);
  const double Iz = integrate_knee([&](double z) { return 1.0 / (1.0 + std::pow(z, s.m)); }, s.Lmax);
  return s.c * d.area() * Iv * Iz;
}

InitialDataSpec normalize_spec(const InitialDataSpec& spec, const Domain& domain) {
  InitialDataSpec s = spec;
  if (!s.normalized) return s;
  s.c = 1.0;
  const double m = spec_mass(s, domain);
  if (!(m > 0.0) || !std::isfinite(m))
    throw Error(Errc::UnnormalizableSpec, "zero or infinite mass");
  s.c = 1.0 / m;
  return s;
}

double f0_value(const InitialDataSpec& s, const Vec3& x, const Vec3& v) {
  if (!(x[2] > 0.0)) return 0.0;
  const double r = v.norm();
  if (s.family == DataFamily::box) {
    return (x[2] < s.L && r < s.R) ? s.c : 0.0;
  }
  if (!(x[2] < s.Lmax) || !(r < s.Rmax)) return 0.0;
  return s.c / ((1.0 + std::pow(r, s.q)) * (1.0 + std::pow(x[2], s.m)));
}

namespace {

Vec3 unit_direction(Rng& rng) {
  const double ct = 1.0 - 2.0 * rng.uniform();
  const double st = std::sqrt(std::max(0.0, 1.0 - ct * ct));
  const double ph = 2.0 * kPi * rng.uniform();
  return Vec3(st * std::cos(ph), st * std::sin(ph), ct);
}

// Draws from a density proportional to t^p / (1 + t^e) on [0, upper) with
// p in {0, 2}. Proposal t^p on [0, 1) and t^{p-e} on [1, upper); the
// acceptance ratio is at least 1/2 on both pieces.
double sample_knee(Rng& rng, double p, double e, double upper) {
  const double b = std::min(1.0, upper);
  const double m1 = std::pow(b, p + 1.0) / (p + 1.0);
  double m2 = 0.0;
  const double k = p + 1.0 - e;  // exponent of the tail antiderivative
  if (upper > 1.0) {
    if (k == 0.0) m2 = std::log(upper);
    else m2 = (std::pow(upper, k) - 1.0) / k;  // -> -1/k when upper = inf, k < 0
  }
  for (;;) {
    double t;
    double accept;
    if (rng.uniform() * (m1 + m2) < m1) {
      t = b * std::pow(1.0 - rng.uniform(), 1.0 / (p + 1.0));
      accept = 1.0 / (1.0 + std::pow(t, e));
    } else {
      const double u = rng.uniform();
      if (k == 0.0) t = std::exp(u * std::log(upper));
      else t = std::pow(1.0 + u * (std::pow(upper, k) - 1.0), 1.0 / k);
      const double te = std::pow(t, e);
      accept = te / (1.0 + te);
    }
    if (t > 0.0 && t < upper && rng.uniform() < accept) return t;
  }
}

}  // namespace

ParticleEnsemble sample_initial(const InitialDataSpec& spec, const Domain& domain, long N,
                                std::uint64_t seed) {
  if (N < 1) throw Error(Errc::InvalidConfig, "sample_initial needs N >= 1");
  const InitialDataSpec s = normalize_spec(spec, domain);
  if (s.family == DataFamily::box && !(s.c > 0.0))
    throw Error(Errc::UnnormalizableSpec, "box amplitude must be positive");
  Rng rng(seed);
  ParticleEnsemble ens;
  ens.particles.reserve(static_cast<std::size_t>(N));
  ens.initial_count = N;
  const double w = 1.0 / static_cast<double>(N);
  for (long n = 0; n < N; ++n) {
    Particle p;
    p.state.x[0] = domain.Lx * rng.uniform();
    p.state.x[1] = domain.Ly * rng.uniform();
    double r;
    if (s.family == DataFamily::box) {
      p.state.x[2] = s.L * (1.0 - rng.uniform());
      r = s.R * std::cbrt(1.0 - rng.uniform());
    } else {
      p.state.x[2] = sample_knee(rng, 0.0, s.m, s.Lmax);
      r = sample_knee(rng, 2.0, s.q, s.Rmax);
    }
    p.state.v = r * unit_direction(rng);
    p.weight = w;
    p.origin = p.state;
    p.f0_value = f0_value(s, p.state.x, p.state.v);
    ens.particles.push_back(p);
  }
  return ens;
}

void advance_ensemble(ParticleEnsemble& ens, double t, double dt, const VelocitySampler& u,
                      const AdvanceOptions& opt) {
  if (!(dt > 0.0)) throw Error(Errc::InvalidTimeStep, "dt must be positive");
  if (opt.gravity_closed_form && !u.is_zero())
    throw Error(Errc::InvalidConfig, "closed-form gravity advance requires a zero field");
  auto& ps = ens.particles;
  const double t1 = t + dt;
  parallel_chunks(ps.size(), [&](int, std::size_t b, std::size_t e) {
    for (std::size_t n = b; n < e; ++n) {
      Particle& p = ps[n];
      if (opt.gravity_closed_form) {
        FlowResult r = gravity_flow(t1, 0.0, p.origin, opt.g);
        if (r.X[2] <= 0.0) {
          const double tau = gravity_exit_time(p.origin, opt.g);
          r = gravity_flow(tau, 0.0, p.origin, opt.g);
          p.alive = false;
          p.exit_time = tau;
        }
        p.state.x = r.X;
        p.state.v = r.V;
      } else {
        const FlowResult r = coupled_flow_step(p.state, t, dt, u, opt.g, opt.tol_exit);
        p.state.x = r.X;
        p.state.v = r.V;
        if (r.exited) {
          p.alive = false;
          p.exit_time = r.exit_time;
        }
      }
    }
  });
  auto mid = std::stable_partition(ps.begin(), ps.end(), [](const Particle& p) { return p.alive; });
  for (auto it = mid; it != ps.end(); ++it) ens.graveyard.push_back(std::move(*it));
  ps.erase(mid, ps.end());
  ens.time = t1;
}

double pointwise_value(const Particle& p, double t) {
  if (!p.alive) throw Error(Errc::DeadParticle, "pointwise value of an absorbed particle");
  return std::exp(3.0 * t) * p.f0_value;
}

bool cic_stencil(const GridDims& grid, const Domain& domain, const Vec3& x, CicStencil& out) {
  if (!(x[2] > 0.0) || !(x[2] < domain.Zmax)) return false;
  const double hx = domain.Lx / grid.Nx;
  const double hy = domain.Ly / grid.Ny;
  const double hz = domain.Zmax / grid.Nz;
  auto horizontal = [](double xi, int n, int& i0, int& i1, double& f) {
    const double s = xi - 0.5;
    const double fl = std::floor(s);
    f = s - fl;
    long i = static_cast<long>(fl) % n;
    if (i < 0) i += n;
    i0 = static_cast<int>(i);
    i1 = (i0 + 1) % n;
  };
  int i0, i1, j0, j1;
  double fx, fy;
  horizontal(x[0] / hx, grid.Nx, i0, i1, fx);
  horizontal(x[1] / hy, grid.Ny, j0, j1, fy);
  const double sz = x[2] / hz - 0.5;
  int k0 = static_cast<int>(std::floor(sz));
  double fz = sz - k0;
  if (k0 < 0) {
    k0 = 0;
    fz = 0.0;
  } else if (k0 >= grid.Nz - 1) {
    k0 = grid.Nz - 1;
    fz = 0.0;
  }
  const int k1 = std::min(k0 + 1, grid.Nz - 1);
  int n = 0;
  for (int c = 0; c < 2; ++c) {
    const int k = c ? k1 : k0;
    const double wz = c ? fz : 1.0 - fz;
    for (int b = 0; b < 2; ++b) {
      const int j = b ? j1 : j0;
      const double wy = b ? fy : 1.0 - fy;
      for (int a = 0; a < 2; ++a) {
        const int i = a ? i1 : i0;
        const double wx = a ? fx : 1.0 - fx;
        out.cell[n] = cell_index(grid, i, j, k);
        out.weight[n] = wx * wy * wz;
        ++n;
      }
    }
  }
  return true;
}

namespace {

constexpr std::size_t kDepositChunks = 16;

struct DepositBuffer {
  GridArray rho;
  std::array<GridArray, 3> j;
  std::vector<GridArray> higher;

  DepositBuffer(long cells, std::size_t n_orders) {
    rho = GridArray::Zero(cells);
    for (auto& c : j) c = GridArray::Zero(cells);
    higher.assign(n_orders, GridArray::Zero(cells));
  }

  void zero() {
    rho.setZero();
    for (auto& c : j) c.setZero();
    for (auto& h : higher) h.setZero();
  }

  void add(const DepositBuffer& o) {
    rho += o.rho;
    for (int c = 0; c < 3; ++c) j[c] += o.j[c];
    for (std::size_t a = 0; a < higher.size(); ++a) higher[a] += o.higher[a];
  }
};

}  // namespace

MomentField deposit_moments(const ParticleEnsemble& ens, const GridDims& grid,
                            const Domain& domain, const std::vector<double>& orders,
                            bool deterministic) {
  const long cells = grid.cells();
  const auto& ps = ens.particles;
  const int workers = std::max(1, worker_count());
  // Deterministic mode fixes the partition from the particle count alone and
  // merges chunk buffers in index order, whatever the worker count.
  const int chunks = deterministic
                         ? static_cast<int>(std::min<std::size_t>(kDepositChunks, ps.size() / 4096 + 1))
                         : std::max(1, std::min<int>(workers, static_cast<int>(ps.size() / 4096 + 1)));
  const int slots = std::min(workers, chunks);
  std::vector<DepositBuffer> bufs;
  bufs.reserve(slots);
  for (int c = 0; c < slots; ++c) bufs.emplace_back(cells, orders.size());
  DepositBuffer total(cells, orders.size());
  std::mutex merge_mutex;

  auto fill = [&](DepositBuffer& buf, std::size_t b, std::size_t e) {
    CicStencil st;
    std::vector<double> pw(orders.size());
    for (std::size_t n = b; n < e; ++n) {
      const Particle& p = ps[n];
      if (!cic_stencil(grid, domain, p.state.x, st)) continue;
      const double speed = p.state.v.norm();
      for (std::size_t a = 0; a < orders.size(); ++a) pw[a] = std::pow(speed, orders[a]);
      for (int s = 0; s < 8; ++s) {
        const double w = p.weight * st.weight[s];
        const long cell = st.cell[s];
        buf.rho[cell] += w;
        for (int d = 0; d < 3; ++d) buf.j[d][cell] += w * p.state.v[d];
        for (std::size_t a = 0; a < orders.size(); ++a) buf.higher[a][cell] += w * pw[a];
      }
    }
  };

  if (deterministic) {
    for (int first = 0; first < chunks; first += slots) {
      const int m = std::min(slots, chunks - first);
      parallel_chunks(
          static_cast<std::size_t>(m),
          [&](int, std::size_t b, std::size_t e) {
            for (std::size_t k = b; k < e; ++k) {
              DepositBuffer& buf = bufs[k];
              buf.zero();
              const auto r = chunk_range(ps.size(), chunks, first + static_cast<int>(k));
              fill(buf, r.begin, r.end);
            }
          },
          m);
      for (int k = 0; k < m; ++k) total.add(bufs[k]);
    }
  } else {
    parallel_chunks(
        ps.size(),
        [&](int c, std::size_t b, std::size_t e) {
          fill(bufs[c], b, e);
          std::lock_guard<std::mutex> lock(merge_mutex);
          total.add(bufs[c]);
        },
        chunks);
  }

  const double inv_vol = 1.0 / (domain.Lx / grid.Nx * domain.Ly / grid.Ny * domain.Zmax / grid.Nz);
  MomentField mf;
  mf.grid = grid;
  mf.domain = domain;
  mf.rho = total.rho * inv_vol;
  for (int d = 0; d < 3; ++d) mf.j[d] = total.j[d] * inv_vol;
  for (std::size_t a = 0; a < orders.size(); ++a) mf.higher[orders[a]] = total.higher[a] * inv_vol;
  return mf;
}

namespace {

double velocity_weight_sup_poly(const InitialDataSpec& s, double q) {
  auto h = [&](double r) { return (1.0 + std::pow(r, q)) / (1.0 + std::pow(r, s.q)); };
  const double hi = std::isinf(s.Rmax) ? 40.0 : std::log(s.Rmax);
  double best = std::max(h(0.0), detail::maximize_1d([&](double lr) { return h(std::exp(lr)); },
                                                     -30.0, hi));
  if (std::isinf(s.Rmax) && q == s.q) best = std::max(best, 1.0);
  return best;
}

}  // namespace

namespace {

struct Prepared {
  InitialDataSpec s;
  bool zero = false;
};

Prepared prepare(const InitialDataSpec& spec, const Domain& domain) {
  Prepared p;
  p.zero = spec.c == 0.0 && !spec.normalized;
  p.s = p.zero ? spec : normalize_spec(spec, domain);
  return p;
}

double box_velocity_factor(const InitialDataSpec& s, double q) {
  return 4.0 * kPi * (std::pow(s.R, 3) / 3.0 + std::pow(s.R, q + 3.0) / (q + 3.0));
}

// sup over x3 of (1 + x3^m) B(x3) for the poly family.
double poly_vertical_sup(const InitialDataSpec& s, double m) {
  const bool linf = std::isinf(s.Lmax);
  if (linf && m > s.m) throw Error(Errc::DivergentFunctional, "vertical weight m exceeds m0");
  auto zw = [&](double z) { return (1.0 + std::pow(z, m)) / (1.0 + std::pow(z, s.m)); };
  const double hi = linf ? 40.0 : std::log(s.Lmax);
  double sup = std::max(zw(0.0), detail::maximize_1d([&](double lz) { return zw(std::exp(lz)); }, -30.0, hi));
  if (linf && m == s.m) sup = std::max(sup, 1.0);
  return sup;
}

// (A * int_0^Lmax ((1 + x3^m) B)^r dx3)^{1/r} for the poly family.
double poly_vertical_lr(const InitialDataSpec& s, double m, double r, double A) {
  if (std::isinf(s.Lmax) && !(r * (s.m - m) > 1.0))
    throw Error(Errc::DivergentFunctional, "vertical L^r norm diverges");
  const double Iz = integrate_knee(
      [&](double z) { return std::pow((1.0 + std::pow(z, m)) / (1.0 + std::pow(z, s.m)), r); }, s.Lmax);
  return std::pow(A * Iz, 1.0 / r);
}

double poly_velocity_integral(const InitialDataSpec& s, double q) {
  if (std::isinf(s.Rmax) && !(q + 3.0 < s.q))
    throw Error(Errc::DivergentFunctional, "velocity integral diverges for q + 3 >= q0");
  return poly_velocity_shape(s, q);
}

}  // namespace

double functional_N(const InitialDataSpec& spec, const Domain& domain, double q) {
  const Prepared p = prepare(spec, domain);
  if (p.zero) return 0.0;
  const auto& s = p.s;
  if (s.family == DataFamily::box) return s.c * (1.0 + std::pow(s.R, q));
  if (std::isinf(s.Rmax) && q > s.q) throw Error(Errc::DivergentFunctional, "N_q diverges for q > q0");
  return s.c * velocity_weight_sup_poly(s, q);
}

double functional_K(const InitialDataSpec& spec, const Domain& domain, double q, double r) {
  if (!(r >= 1.0)) throw Error(Errc::DomainError, "r must be >= 1");
  const Prepared p = prepare(spec, domain);
  if (p.zero) return 0.0;
  const auto& s = p.s;
  const double N = functional_N(spec, domain, q);
  if (std::isinf(r)) return N;
  if (s.family == DataFamily::box) return N * std::pow(domain.area() * s.L, 1.0 / r);
  return N * poly_vertical_lr(s, 0.0, r, domain.area());
}

double functional_H(const InitialDataSpec& spec, const Domain& domain, double q, double m) {
  const Prepared p = prepare(spec, domain);
  if (p.zero) return 0.0;
  const auto& s = p.s;
  if (s.family == DataFamily::box) return s.c * (1.0 + std::pow(s.L, m)) * box_velocity_factor(s, q);
  return s.c * poly_velocity_integral(s, q) * poly_vertical_sup(s, m);
}

double functional_F(const InitialDataSpec& spec, const Domain& domain, double q, double m, double r) {
  if (!(r >= 1.0)) throw Error(Errc::DomainError, "r must be >= 1");
  if (std::isinf(r)) return functional_H(spec, domain, q, m);
  const Prepared p = prepare(spec, domain);
  if (p.zero) return 0.0;
  const auto& s = p.s;
  const double A = domain.area();
  if (s.family == DataFamily::box) {
    const double Iz =
        detail::integrate_gl(0.0, s.L, [&](double z) { return std::pow(1.0 + std::pow(z, m), r); }, 32);
    return s.c * box_velocity_factor(s, q) * std::pow(A * Iz, 1.0 / r);
  }
  return s.c * poly_velocity_integral(s, q) * poly_vertical_lr(s, m, r, A);
}

DecayFunctionals decay_functionals(const InitialDataSpec& spec, const Domain& domain, double q,
                                   double m, double r) {
  DecayFunctionals out;
  out.N = functional_N(spec, domain, q);
  out.K = functional_K(spec, domain, q, r);
  out.H = functional_H(spec, domain, q, m);
  out.F = functional_F(spec, domain, q, m, r);
  return out;
}

double pointwise_weighted_sup(const ParticleEnsemble& ens, double q) {
  double best = 0.0;
  const double amp = std::exp(3.0 * ens.time);
  for (const auto& p : ens.particles) {
    best = std::max(best, (1.0 + std::pow(p.state.v.norm(), q)) * amp * p.f0_value);
  }
  return best;
}

void write_ensemble_snapshot(const std::string& path, const ParticleEnsemble& ens) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(Errc::IoError, "cannot write '" + path + "'");
  os.write("VNSE", 4);
  detail::put_u32(os, 1);
  detail::put_u64(os, ens.particles.size() + ens.graveyard.size());
  detail::put_f64(os, ens.time);
  auto record = [&](const Particle& p) {
    for (int i = 0; i < 3; ++i) detail::put_f64(os, p.state.x[i]);
    for (int i = 0; i < 3; ++i) detail::put_f64(os, p.state.v[i]);
    detail::put_f64(os, p.weight);
    detail::put_f64(os, p.f0_value);
    detail::put_u8(os, p.alive ? 1 : 0);
  };
  for (const auto& p : ens.particles) record(p);
  for (const auto& p : ens.graveyard) record(p);
  if (!os) throw Error(Errc::IoError, "write failed for '" + path + "'");
}

ParticleEnsemble read_ensemble_snapshot(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(Errc::IoError, "cannot read '" + path + "'");
  char magic[4];
  if (!is.read(magic, 4) || std::string(magic, 4) != "VNSE")
    throw Error(Errc::IoError, "bad ensemble snapshot magic");
  if (detail::get_u32(is) != 1) throw Error(Errc::IoError, "unsupported snapshot version");
  const std::uint64_t n = detail::get_u64(is);
  ParticleEnsemble ens;
  ens.time = detail::get_f64(is);
  ens.initial_count = static_cast<long>(n);
  for (std::uint64_t k = 0; k < n; ++k) {
    Particle p;
    for (int i = 0; i < 3; ++i) p.state.x[i] = detail::get_f64(is);
    for (int i = 0; i < 3; ++i) p.state.v[i] = detail::get_f64(is);
    p.weight = detail::get_f64(is);
    p.f0_value = detail::get_f64(is);
    p.alive = detail::get_u8(is) != 0;
    (p.alive ? ens.particles : ens.graveyard).push_back(p);
  }
  return ens;
}

}  // namespace vns
