#pragma once

#include "pato/fea.hpp"
#include "pato/grid.hpp"
#include "pato/material.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

namespace pato {

/// Calibrated process shrink strains applied to newly deposited material.
struct InherentStrain {
  double exx = -0.010295;
  double eyy = -0.010295;
  double ezz = -0.03;
};

struct BuildSpec {
  int layersPerStep = 1;
  InherentStrain inherent;
  double rhoActive = 1e-3;  // densities at or below this never deposit
  // Extra clamped dofs besides the fully fixed bottom node layer (the base
  // anchor points sit inside that layer already; this hook serves tests and
  // special fixtures).
  std::vector<std::int64_t> extraFixedDofs;
};

/// Contiguous range of element layers [k0, k1) deposited in one step.
struct Slab {
  int k0 = 0;
  int k1 = 0;
};

std::vector<Slab> layer_schedule(const GridDims& dims, int layersPerStep);

struct BuildResult {
  SymTensorFieldD stress;         // residual stress at element centroids
  SymTensorFieldD elasticStrain;  // stress-generating strain (birth-referenced, shrink removed)
  Eigen::VectorXd displacement;   // accumulated nodal displacement
  std::vector<std::uint8_t> everActive;
};

/// Deposits the part slab by slab from the plate upward. Each step activates
/// the new slab's solid elements strain-free, loads them with the inherent
/// shrink scaled by the same interpolation as their stiffness, and solves for
/// the incremental displacement. Solver failures carry the slab index.
BuildResult simulate_build(const FieldD& rho, const MaterialSpec& mat, const BuildSpec& spec,
                           const SolverOpts& opts = {});

}  // namespace pato
