#pragma once

#include "pato/fea.hpp"
#include "pato/filters.hpp"
#include "pato/grid.hpp"
#include "pato/material.hpp"
#include "pato/mma.hpp"

#include <Eigen/Dense>

#include <functional>
#include <string>
#include <vector>

namespace pato {

enum class Physics { ThermalCompliance, ElasticCompliance };

/// Compliance-minimization problem on the voxel grid. load/constrained are
/// interpreted by physics: nodal heat + zero-temperature nodes for thermal,
/// nodal forces + fixed dofs for elastic. Vtarget may be 1 (all solid).
struct TOProblem {
  Physics physics = Physics::ThermalCompliance;
  RegionMask mask;
  MaterialSpec material;
  std::vector<FilterStageSpec> stages;
  double Vtarget = 0.3;
  int maxIters = 300;
  double moveLimit = 0.2;
  double changeTol = 0.01;
  Eigen::VectorXd load;
  std::vector<std::int64_t> constrained;
  SolverOpts solver;
};

struct VolumeResult {
  double fraction = 0.0;  // mean physical density over Design voxels
  double g = 0.0;         // fraction / Vtarget - 1
  FieldD dgPhys;          // uniform on Design voxels, zero on passives
};
VolumeResult volume_and_sensitivity(const FieldD& rhoPhys, const RegionMask& mask, double Vtarget);

struct StateSolve {
  Eigen::VectorXd u;
  double compliance = 0.0;
  ArrayX<double> unitEnergy;  // per-element u_e^T Khat u_e
  CgStats stats;
};
StateSolve solve_state(const TOProblem& prob, const FieldD& rhoPhys,
                       const Eigen::VectorXd* warmStart = nullptr);

/// dCompliance/dPhysicalDensity for the self-adjoint objective:
/// -simp'(rho) * unitEnergy per element. Nonpositive everywhere.
FieldD compliance_sensitivity(const TOProblem& prob, const FieldD& rhoPhys,
                              const ArrayX<double>& unitEnergy);

struct IterationRecord {
  int iter = 0;
  double objective = 0.0;
  double volumeFraction = 0.0;
  double maxChange = 0.0;
  double zeta = 0.0;  // hook diagnostic (peak crack index when one is attached)
};

/// Replaces the raw compliance gradient with a blended one; zeta is recorded
/// in the history. Lets a caller mix extra objective terms into the loop
/// without this module knowing about them.
struct HookResult {
  FieldD gradPhys;
  double zeta = 0.0;
};
using SensitivityHook =
    std::function<HookResult(const FieldD& rhoPhys, const FieldD& dCompliancePhys)>;

struct TOResult {
  Eigen::VectorXd x;  // reduced design variables at exit
  FieldD density;     // physical densities at exit
  double objective = 0.0;
  double volumeFraction = 0.0;
  std::vector<IterationRecord> history;
};

/// Filter -> solve -> sensitivity -> MMA until the design stalls or maxIters.
/// Deterministic: same problem, same result. Solver failures rethrow with the
/// optimization iteration attached.
TOResult run_loop(const TOProblem& prob, const SensitivityHook* hook = nullptr);

inline TOResult to_loop(const TOProblem& prob) { return run_loop(prob); }

void write_history_csv(const std::string& path, const std::vector<IterationRecord>& history);

}  // namespace pato
