#include "pato/buildsim.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace pato {

std::vector<Slab> layer_schedule(const GridDims& dims, int layersPerStep) {
  validate_dims(dims);
  if (layersPerStep < 1) throw std::invalid_argument("layer schedule: layersPerStep must be >= 1");
  if (layersPerStep > dims.nz)
    throw std::invalid_argument("layer schedule: layersPerStep exceeds layer count");
  std::vector<Slab> slabs;
  for (int k0 = 0; k0 < dims.nz; k0 += layersPerStep)
    slabs.push_back({k0, std::min(k0 + layersPerStep, dims.nz)});
  return slabs;
}

BuildResult simulate_build(const FieldD& rho, const MaterialSpec& mat, const BuildSpec& spec,
                           const SolverOpts& opts) {
  validate_material(mat);
  const GridDims& d = rho.dims;
  if (!rho.values.isFinite().all()) throw std::invalid_argument("build: densities must be finite");
  if (rho.values.minCoeff() < 0.0 || rho.values.maxCoeff() > 1.0)
    throw std::invalid_argument("build: densities must lie in [0,1]");
  const std::vector<Slab> slabs = layer_schedule(d, spec.layersPerStep);

  const std::int64_t nCell = d.cellCount();
  const std::int64_t nDof = 3 * d.nodeCount();

  ElasticProblem prob;
  prob.dims = d;
  prob.nu = mat.nu;
  prob.stiffness = ArrayX<double>::Zero(nCell);
  for (std::int64_t e = 0; e < nCell; ++e)
    prob.stiffness[e] = simp_interpolate(rho.values[e], mat.p, mat.Emin, mat.E0);
  prob.load = Eigen::VectorXd::Zero(nDof);
  prob.active.assign(size_t(nCell), 0);
  for (int j = 0; j <= d.ny; ++j)
    for (int i = 0; i <= d.nx; ++i) {
      const std::int64_t n = d.node(i, j, 0);
      prob.fixedDofs.push_back(3 * n);
      prob.fixedDofs.push_back(3 * n + 1);
      prob.fixedDofs.push_back(3 * n + 2);
    }
  prob.fixedDofs.insert(prob.fixedDofs.end(), spec.extraFixedDofs.begin(),
                        spec.extraFixedDofs.end());

  const Eigen::Matrix<double, 6, 24> Bc = elastic_centroid_b(d.h);
  Eigen::Matrix<double, 6, 1> shrink;
  shrink << spec.inherent.exx, spec.inherent.eyy, spec.inherent.ezz, 0.0, 0.0, 0.0;

  Eigen::VectorXd u = Eigen::VectorXd::Zero(nDof);
  Eigen::VectorXd du = Eigen::VectorXd::Zero(nDof);
  Eigen::Array<double, Eigen::Dynamic, 6> birthStrain(nCell, 6);
  birthStrain.setZero();
  std::vector<std::uint8_t> ever(size_t(nCell), 0);

  for (size_t s = 0; s < slabs.size(); ++s) {
    prob.eigenstrain = Eigen::Array<double, Eigen::Dynamic, 6>::Zero(nCell, 6);
    Eigen::Matrix<double, 24, 1> ue;
    for (int k = slabs[s].k0; k < slabs[s].k1; ++k)
      for (int j = 0; j < d.ny; ++j)
        for (int i = 0; i < d.nx; ++i) {
          const std::int64_t e = d.cell(i, j, k);
          if (rho.values[e] <= spec.rhoActive) continue;
          prob.active[size_t(e)] = 1;
          ever[size_t(e)] = 1;
          prob.eigenstrain.row(e) = shrink.transpose().array();
          gather_element_u(d, i, j, k, u, ue);
          birthStrain.row(e) = (Bc * ue).transpose().array();
        }
    try {
      du = solve_elastic(prob, opts, nullptr, &du);
    } catch (const SolverError& err) {
      throw SolverError(std::string(err.what()) + " during deposition step " + std::to_string(s),
                        err.residual, err.iterations, int(s));
    }
    u += du;
  }

  BuildResult out;
  out.stress = make_tensor_field<double>(d);
  out.elasticStrain = make_tensor_field<double>(d);
  out.displacement = std::move(u);
  out.everActive = std::move(ever);

  const Eigen::Matrix<double, 6, 6> C = elastic_moduli(mat.nu);
  Eigen::Matrix<double, 24, 1> ue;
  for (int k = 0; k < d.nz; ++k)
    for (int j = 0; j < d.ny; ++j)
      for (int i = 0; i < d.nx; ++i) {
        const std::int64_t e = d.cell(i, j, k);
        if (!out.everActive[size_t(e)]) continue;
        gather_element_u(d, i, j, k, out.displacement, ue);
        // engineering Voigt, measured from the element's strain-free birth state
        Eigen::Matrix<double, 6, 1> eps = Bc * ue - birthStrain.row(e).matrix().transpose();
        eps -= shrink;
        const Eigen::Matrix<double, 6, 1> sig = prob.stiffness[e] * (C * eps);
        for (int c = 0; c < 6; ++c) out.stress.comp(e, c) = sig[c];
        out.elasticStrain.comp(e, CXX) = eps[0];
        out.elasticStrain.comp(e, CYY) = eps[1];
        out.elasticStrain.comp(e, CZZ) = eps[2];
        out.elasticStrain.comp(e, CXY) = 0.5 * eps[3];
        out.elasticStrain.comp(e, CYZ) = 0.5 * eps[4];
        out.elasticStrain.comp(e, CXZ) = 0.5 * eps[5];
      }
  return out;
}

}  // namespace pato
