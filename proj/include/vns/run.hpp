#pragma once

#include "vns/core.hpp"
#include "vns/diagnostics.hpp"
#include "vns/fluid.hpp"
#include "vns/kinetic.hpp"

#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace vns {

/// Post-hoc checks a preset can request.
///   extinction_before_t0   all particles absorbed by t0(L, R) (box data)
///   force_envelope         ||u(t)||^2 <= ||u(1)||^2 2^{3/2} (1+t)^{-3/2} on [1, t_end]
///   mass_monotone          alive mass nonincreasing every step
///   max_principle          pointwise values below e^{3t} ||f0||_inf
///   holder_bound           Brinkman L^p bound for p = 2, 3 at every sample
///   energy_envelope        E(t) below the sublinear Gronwall envelope
struct ExperimentPreset {
  std::string name;
  std::string description;
  std::vector<std::pair<std::string, std::string>> overrides;
  std::vector<std::string> checks;
};

const std::vector<ExperimentPreset>& presets();
const ExperimentPreset& find_preset(const std::string& name);
RunConfig preset_config(const std::string& name);

/// Names every check accepted in ExperimentPreset::checks.
const std::vector<std::string>& known_checks();

struct StepRecord {
  double t = 0.0;
  double alive_mass = 0.0;
  long alive_count = 0;
  double u_l2_sq = 0.0;
};

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct RunResult {
  DiagnosticsSeries series;
  std::vector<StepRecord> steps;
  ParticleEnsemble ensemble;
  std::optional<FluidField> field;
  std::optional<double> extinction_time;  // largest exit time once every particle is absorbed
  double t_reached = 0.0;
  /// Samples where the top wall is felt: fluid energy above 0.7 Zmax over 1%
  /// of the total, or a particle at 0.9 Zmax or higher.
  long top_flags = 0;
  std::optional<double> first_top_flag;
  bool truncated = false;
  std::string error;
  Errc error_code = Errc::InvalidConfig;
};

/// Runs the time loop advance -> deposit -> Brinkman -> NS step -> diagnostics.
/// Module errors stop the loop and mark the result truncated.
RunResult simulate(const ValidatedConfig& vc);

std::vector<CheckResult> run_checks(const ValidatedConfig& vc, const RunResult& r,
                                    const std::vector<std::string>& checks);

/// 64-bit FNV-1a.
std::uint64_t fnv1a64(const std::string& bytes);
std::string file_hash(const std::string& path);

struct RunOutputs {
  RunResult result;
  std::vector<CheckResult> checks;
  std::vector<std::string> files;
  int exit_code = 0;
};

/// simulate + CSV, snapshots, config echo and manifest.json in out_dir.
RunOutputs run_to_directory(const ValidatedConfig& vc, const std::string& out_dir,
                            const std::vector<std::string>& checks = {});

/// Code version recorded in manifests.
const char* code_version();

}  // namespace vns
