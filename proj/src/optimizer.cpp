#include "pato/optimizer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>

namespace pato {

VolumeResult volume_and_sensitivity(const FieldD& rhoPhys, const RegionMask& mask,
                                    double Vtarget) {
  if (!(rhoPhys.dims == mask.dims)) throw std::invalid_argument("volume: dims mismatch");
  if (!(Vtarget > 0.0 && Vtarget <= 1.0))
    throw std::invalid_argument("volume: Vtarget must lie in (0, 1]");
  std::int64_t nDesign = 0;
  double sum = 0.0;
  for (std::int64_t v = 0; v < rhoPhys.size(); ++v)
    if (mask.tags[size_t(v)] == VoxelTag::Design) {
      ++nDesign;
      sum += rhoPhys.values[v];
    }
  if (nDesign == 0) throw std::invalid_argument("volume: mask has no Design voxels");
  VolumeResult r;
  r.fraction = sum / double(nDesign);
  r.g = r.fraction / Vtarget - 1.0;
  r.dgPhys = make_field<double>(rhoPhys.dims);
  const double w = 1.0 / (double(nDesign) * Vtarget);
  for (std::int64_t v = 0; v < rhoPhys.size(); ++v)
    if (mask.tags[size_t(v)] == VoxelTag::Design) r.dgPhys.values[v] = w;
  return r;
}

namespace {

void validate_problem(const TOProblem& prob) {
  validate_dims(prob.mask.dims);
  validate_material(prob.material);
  if (!(prob.Vtarget > 0.0 && prob.Vtarget <= 1.0))
    throw std::invalid_argument("optimizer: Vtarget must lie in (0, 1]");
  if (prob.maxIters < 1) throw std::invalid_argument("optimizer: maxIters must be >= 1");
  if (!(prob.changeTol > 0.0)) throw std::invalid_argument("optimizer: changeTol must be > 0");
  const std::int64_t nDof = prob.physics == Physics::ThermalCompliance
                                ? prob.mask.dims.nodeCount()
                                : 3 * prob.mask.dims.nodeCount();
  if (prob.load.size() != nDof)
    throw std::invalid_argument("optimizer: load size does not match the grid");
}

}  // namespace

StateSolve solve_state(const TOProblem& prob, const FieldD& rhoPhys,
                       const Eigen::VectorXd* warmStart) {
  const MaterialSpec& m = prob.material;
  StateSolve out;
  if (prob.physics == Physics::ThermalCompliance) {
    ThermalProblem tp;
    tp.dims = rhoPhys.dims;
    tp.conductivity = ArrayX<double>::Zero(rhoPhys.size());
    for (std::int64_t e = 0; e < rhoPhys.size(); ++e)
      tp.conductivity[e] = simp_interpolate(rhoPhys.values[e], m.p, m.kmin, m.k0);
    tp.load = prob.load;
    tp.dirichletNodes = prob.constrained;
    out.u = solve_thermal(tp, prob.solver, &out.stats, warmStart);
    out.compliance = compliance(out.u, prob.load);
    out.unitEnergy = element_strain_energy_unit(tp, out.u);
  } else {
    ElasticProblem ep;
    ep.dims = rhoPhys.dims;
    ep.nu = m.nu;
    ep.stiffness = ArrayX<double>::Zero(rhoPhys.size());
    for (std::int64_t e = 0; e < rhoPhys.size(); ++e)
      ep.stiffness[e] = simp_interpolate(rhoPhys.values[e], m.p, m.Emin, m.E0);
    ep.load = prob.load;
    ep.fixedDofs = prob.constrained;
    out.u = solve_elastic(ep, prob.solver, &out.stats, warmStart);
    out.compliance = compliance(out.u, prob.load);
    out.unitEnergy = element_strain_energy_unit(ep, out.u);
  }
  return out;
}

FieldD compliance_sensitivity(const TOProblem& prob, const FieldD& rhoPhys,
                              const ArrayX<double>& unitEnergy) {
  if (unitEnergy.size() != rhoPhys.size())
    throw std::invalid_argument("sensitivity: size mismatch");
  const MaterialSpec& m = prob.material;
  const double lo = prob.physics == Physics::ThermalCompliance ? m.kmin : m.Emin;
  const double hi = prob.physics == Physics::ThermalCompliance ? m.k0 : m.E0;
  FieldD g = make_field<double>(rhoPhys.dims);
  for (std::int64_t e = 0; e < rhoPhys.size(); ++e)
    g.values[e] = -simp_derivative(rhoPhys.values[e], m.p, lo, hi) * unitEnergy[e];
  return g;
}

TOResult run_loop(const TOProblem& prob, const SensitivityHook* hook) {
  validate_problem(prob);
  bool symX = false, extY = false;
  for (const FilterStageSpec& s : prob.stages) {
    if (s.type == FilterStage::SymmetryX) symX = true;
    if (s.type == FilterStage::ExtrusionY) extY = true;
  }
  DesignSpace space(prob.mask, symX, extY);
  FilterChain chain(prob.mask, prob.stages);

  Mma::Options mopts;
  mopts.moveLimit = prob.moveLimit;
  Mma mma(space.size(), mopts);

  Eigen::VectorXd x = space.uniform(prob.Vtarget);
  Eigen::VectorXd warm;
  TOResult result;

  for (int iter = 1; iter <= prob.maxIters; ++iter) {
    const FieldD rhoPhys = chain.forward(space.expand(x));
    StateSolve state;
    try {
      state = solve_state(prob, rhoPhys, warm.size() ? &warm : nullptr);
    } catch (const SolverError& e) {
      throw SolverError(std::string(e.what()) + " at optimization iteration " +
                            std::to_string(iter),
                        e.residual, e.iterations, e.slab);
    }
    warm = state.u;

    FieldD gradPhys = compliance_sensitivity(prob, rhoPhys, state.unitEnergy);
    double zeta = 0.0;
    if (hook && *hook) {
      HookResult h = (*hook)(rhoPhys, gradPhys);
      gradPhys = std::move(h.gradPhys);
      zeta = h.zeta;
    }
    const VolumeResult vol = volume_and_sensitivity(rhoPhys, prob.mask, prob.Vtarget);

    const Eigen::VectorXd dObj = space.reduce_grad(chain.backward(gradPhys));
    const Eigen::VectorXd dCon = space.reduce_grad(chain.backward(vol.dgPhys));

    const Eigen::VectorXd xNext = mma.update(x, dObj, vol.g, dCon);
    const double maxChange = (xNext - x).cwiseAbs().maxCoeff();
    result.history.push_back({iter, state.compliance, vol.fraction, maxChange, zeta});
    x = xNext;
    if (maxChange < prob.changeTol) break;
  }

  result.x = x;
  result.density = chain.forward(space.expand(x));
  StateSolve finalState;
  try {
    finalState = solve_state(prob, result.density, warm.size() ? &warm : nullptr);
  } catch (const SolverError& e) {
    throw SolverError(std::string(e.what()) + " at the final evaluation", e.residual,
                      e.iterations, e.slab);
  }
  result.objective = finalState.compliance;
  result.volumeFraction = volume_and_sensitivity(result.density, prob.mask, prob.Vtarget).fraction;
  return result;
}

void write_history_csv(const std::string& path, const std::vector<IterationRecord>& history) {
  if (history.empty()) throw std::invalid_argument("nothing to emit: empty history");
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << "iter,objective,volume,max_change,zeta\n";
  char buf[160];
  for (const IterationRecord& r : history) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g\n", r.iter, r.objective,
                  r.volumeFraction, r.maxChange, r.zeta);
    out << buf;
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace pato
