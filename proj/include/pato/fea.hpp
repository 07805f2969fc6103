#pragma once

#include "pato/grid.hpp"
#include "pato/material.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace pato {

struct SolverOpts {
  double cgTol = 1e-8;
  int cgMaxIter = 50000;
  bool jacobi = true;
  bool recordEnergy = false;  // track the CG quadratic model per iteration (used by tests)
};

struct CgStats {
  int iterations = 0;
  double relResidual = 0.0;
  std::vector<double> energy;
};

class SolverError : public std::runtime_error {
 public:
  SolverError(const std::string& msg, double residual, int iterations, int slab = -1)
      : std::runtime_error(msg), residual(residual), iterations(iterations), slab(slab) {}
  double residual;
  int iterations;
  int slab;
};

/// Unit-property element matrices for a cubic voxel of edge h, 2x2x2 Gauss.
/// Voigt order xx, yy, zz, xy, yz, xz with engineering shear.
Eigen::Matrix<double, 8, 8> thermal_element_matrix(double h);
Eigen::Matrix<double, 24, 24> elastic_element_matrix(double h, double nu);
Eigen::Matrix<double, 6, 24> elastic_centroid_b(double h);
Eigen::Matrix<double, 6, 6> elastic_moduli(double nu);  // E = 1

/// Steady conduction on the voxel grid, one temperature dof per node.
/// Dirichlet nodes are held at zero by row/column projection.
struct ThermalProblem {
  GridDims dims;
  ArrayX<double> conductivity;              // absolute per-element k
  Eigen::VectorXd load;                     // nodal heat input
  std::vector<std::int64_t> dirichletNodes; // T = 0
};

/// Small-strain elasticity, 3 dofs per node. Optional per-element eigenstrain
/// (tensor components) turns into equivalent nodal loads scaled by the same
/// SIMP factor as the stiffness. Optional activity mask excludes elements
/// entirely; nodes touching no active element are held at zero.
struct ElasticProblem {
  GridDims dims;
  double nu = 0.3;
  ArrayX<double> stiffness;                 // absolute per-element E
  Eigen::VectorXd load;                     // applied nodal forces
  std::vector<std::int64_t> fixedDofs;      // u = 0
  Eigen::Array<double, Eigen::Dynamic, 6> eigenstrain;  // per element; 0 rows = none
  std::vector<std::uint8_t> active;         // per element; empty = all active
};

/// Matrix-free SPD operator with the Dirichlet projection baked in
/// (identity on constrained dofs). diag is the Jacobi preconditioner.
struct LinearOperator {
  std::int64_t n = 0;
  std::function<void(const Eigen::VectorXd&, Eigen::VectorXd&)> apply;
  Eigen::VectorXd diag;
  Eigen::VectorXd freeMask;  // 1 on free dofs, 0 on constrained
};

LinearOperator thermal_operator(const ThermalProblem& prob);
LinearOperator elastic_operator(const ElasticProblem& prob);

/// Jacobi-preconditioned conjugate gradients. Throws SolverError if the
/// relative residual has not reached opts.cgTol within opts.cgMaxIter.
CgStats pcg(const LinearOperator& op, const Eigen::VectorXd& b, Eigen::VectorXd& x,
            const SolverOpts& opts);

/// Equivalent nodal loads for the per-element eigenstrains.
Eigen::VectorXd eigenstrain_loads(const ElasticProblem& prob);

/// Solves K u = load (+ eigenstrain loads for the elastic case).
/// Pass warmStart to seed CG from a previous solution.
Eigen::VectorXd solve_thermal(const ThermalProblem& prob, const SolverOpts& opts = {},
                              CgStats* stats = nullptr, const Eigen::VectorXd* warmStart = nullptr);
Eigen::VectorXd solve_elastic(const ElasticProblem& prob, const SolverOpts& opts = {},
                              CgStats* stats = nullptr, const Eigen::VectorXd* warmStart = nullptr);

inline double compliance(const Eigen::VectorXd& u, const Eigen::VectorXd& f) {
  if (u.size() != f.size()) throw std::invalid_argument("compliance: size mismatch");
  return u.dot(f);
}

/// Centroid-recovered total strain and stress (tensor components).
/// sigma = E_e Chat (eps - eps*); inactive elements stay exactly zero.
struct StressStrain {
  SymTensorFieldD stress;
  SymTensorFieldD strain;
};
StressStrain element_stress_strain(const ElasticProblem& prob, const Eigen::VectorXd& u);

/// Per-element u_e^T Khat u_e with unit material property (the compliance
/// sensitivity kernel; multiply by -simp_derivative for dPhi/drho).
ArrayX<double> element_strain_energy_unit(const ThermalProblem& prob, const Eigen::VectorXd& u);
ArrayX<double> element_strain_energy_unit(const ElasticProblem& prob, const Eigen::VectorXd& u);

/// Gathers the 24 element dof values for element (i,j,k).
void gather_element_u(const GridDims& dims, int i, int j, int k, const Eigen::VectorXd& u,
                      Eigen::Matrix<double, 24, 1>& ue);

}  // namespace pato
