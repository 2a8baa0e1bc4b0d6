#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>

namespace vns {

template <class Scalar>
using Vec3T = Eigen::Matrix<Scalar, 3, 1>;
template <class Scalar>
using Mat3T = Eigen::Matrix<Scalar, 3, 3>;

using Vec3 = Vec3T<double>;
using Mat3 = Mat3T<double>;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

enum class Errc {
  InvalidDelta0,
  InvalidGrid,
  InvalidTimeStep,
  InvalidConfig,
  UnknownKey,
  NonFiniteField,
  FieldHistoryUnavailable,
  SingularDifference,
  DeadParticle,
  UnnormalizableSpec,
  DivergentFunctional,
  DivergentIntegral,
  GridMismatch,
  CflViolation,
  SolverDivergence,
  DomainError,
  ExponentViolation,
  NonPositiveData,
  MissingColumn,
  IoError,
};

const char* errc_name(Errc code);

/// Every recoverable failure in the library is reported through this type.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what);
  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

/// Gravity vector G = (0, 0, -g).
inline Vec3 gravity(double g) { return Vec3(0.0, 0.0, -g); }

/// Periodic slab T^2(Lx, Ly) x (0, Zmax).
struct Domain {
  double Lx = 2.0;
  double Ly = 2.0;
  double Zmax = 4.0;

  double area() const { return Lx * Ly; }
};

struct GridDims {
  int Nx = 16;
  int Ny = 16;
  int Nz = 16;

  long cells() const { return static_cast<long>(Nx) * Ny * Nz; }
  bool operator==(const GridDims&) const = default;
};

struct PhasePoint {
  Vec3 x = Vec3::Zero();
  Vec3 v = Vec3::Zero();
};

/// One Lagrangian carrier of f. `weight` is transported phase-space measure;
/// `f0_value` is f0 at `origin`, so the pointwise value at time t is e^{3t} f0_value.
struct Particle {
  PhasePoint state;
  double weight = 0.0;
  double f0_value = 0.0;
  PhasePoint origin;
  bool alive = true;
  std::optional<double> exit_time;
};

enum class DataFamily { box, poly_decay };

/// Analytic descriptor of f0.
///
/// box:        f0 = c * 1{0 < x3 < L} * 1{|v| < R}
/// poly_decay: f0 = c / ((1 + |v|^q)(1 + x3^m)) on {x3 < Lmax, |v| < Rmax}
struct InitialDataSpec {
  DataFamily family = DataFamily::box;
  double L = 1.0;
  double R = 1.0;
  double c = 1.0;
  double q = 8.0;
  double m = 3.0;
  double Rmax = kInf;
  double Lmax = kInf;
  bool normalized = true;
};

enum class Mode { gravity_only, prescribed_field, coupled, fluid_only };

const char* mode_name(Mode m);
Mode parse_mode(const std::string& s);

/// Analytic prescribed velocity field. `cellular` is a wall-compatible
/// divergence-free roll; `uniform` is a constant vector (used in tests).
struct PrescribedFieldSpec {
  std::string type = "cellular";
  double amplitude = 0.0;
  /// If > 0, the amplitude is derived so that the chosen budget over
  /// [0, horizon] equals this value.
  double budget = 0.0;
  std::string budget_kind = "u";  // "u" -> int ||u||_inf, "grad" -> int ||grad u||_inf
  double horizon = kInf;          // field is switched off after this time
  int wavenumber = 1;             // horizontal mode index in x1
  Vec3 uniform = Vec3::Zero();
};

struct RunConfig {
  double g = 1.0;
  double dt = 0.01;
  double t_end = 1.0;
  long particle_count = 10000;
  GridDims grid;
  std::uint64_t rng_seed = 1;
  /// NaN means "use the default min(0.1, 0.9 kappa_{1/2}(g))".
  double delta0 = std::numeric_limits<double>::quiet_NaN();
  Mode mode = Mode::gravity_only;
  std::map<std::string, double> tolerances;

  Domain domain;
  InitialDataSpec data;
  PrescribedFieldSpec field;

  std::string u0_type = "zero";  // zero | shear | cellular
  double u0_amplitude = 0.0;

  double force_C = 0.0;
  double force_exponent = 1.75;

  int diag_every = 10;
  bool deterministic = false;
  bool write_snapshots = true;
};

/// A RunConfig whose invariants have been checked, with derived constants.
struct ValidatedConfig {
  RunConfig cfg;
  double kappa_half = 0.0;  // kappa_{1/2}(g)
  double t0_unit = 0.0;     // t0(1,1) = 1 + 2/g
  double T0 = 0.0;          // t0(1,1) + 1
  double t0_data = 0.0;     // t0(L, R) for box data, NaN otherwise
  double tol_exit = 0.0;    // 1e-10 Zmax

  double tol(const std::string& name, double fallback) const;
};

double default_delta0(double g);

RunConfig default_config();

ValidatedConfig validate_config(const RunConfig& cfg);
ValidatedConfig validate_config(const ValidatedConfig& vc);

/// Parses the flat key=value format. Unknown keys raise Errc::UnknownKey.
RunConfig parse_config(std::istream& in);
RunConfig parse_config_string(const std::string& text);
RunConfig load_config(const std::string& path);

/// Applies one key=value assignment to `cfg`.
void apply_config_key(RunConfig& cfg, const std::string& key, const std::string& value);

/// Canonical text form; parse_config(to_config_text(c)) reproduces c.
std::string to_config_text(const RunConfig& cfg);

/// Shortest decimal string that round-trips to the same double.
std::string format_double(double x);

}  // namespace vns
