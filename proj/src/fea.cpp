#include "pato/fea.hpp"

#include <memory>

namespace pato {

namespace {

// Natural-coordinate corner signs; local node l sits at offset
// ((1+sx)/2, (1+sy)/2, (1+sz)/2) from the element's (i,j,k) node.
constexpr int SGN[8][3] = {{-1, -1, -1}, {1, -1, -1}, {1, 1, -1}, {-1, 1, -1},
                           {-1, -1, 1},  {1, -1, 1},  {1, 1, 1},  {-1, 1, 1}};

Eigen::Matrix<double, 3, 8> shape_gradients(double s, double t, double p, double h) {
  Eigen::Matrix<double, 3, 8> g;
  const double c = 2.0 / h / 8.0;  // chain rule d/dx = (2/h) d/ds, times the 1/8 of N
  for (int l = 0; l < 8; ++l) {
    const double sx = SGN[l][0], sy = SGN[l][1], sz = SGN[l][2];
    g(0, l) = c * sx * (1.0 + sy * t) * (1.0 + sz * p);
    g(1, l) = c * sy * (1.0 + sx * s) * (1.0 + sz * p);
    g(2, l) = c * sz * (1.0 + sx * s) * (1.0 + sy * t);
  }
  return g;
}

Eigen::Matrix<double, 6, 24> strain_displacement(const Eigen::Matrix<double, 3, 8>& g) {
  Eigen::Matrix<double, 6, 24> B = Eigen::Matrix<double, 6, 24>::Zero();
  for (int l = 0; l < 8; ++l) {
    const int c = 3 * l;
    B(0, c + 0) = g(0, l);
    B(1, c + 1) = g(1, l);
    B(2, c + 2) = g(2, l);
    B(3, c + 0) = g(1, l);  // gamma_xy
    B(3, c + 1) = g(0, l);
    B(4, c + 1) = g(2, l);  // gamma_yz
    B(4, c + 2) = g(1, l);
    B(5, c + 0) = g(2, l);  // gamma_xz
    B(5, c + 2) = g(0, l);
  }
  return B;
}

constexpr double kGauss = 0.57735026918962576451;  // 1/sqrt(3)

struct NodeOffsets {
  std::int64_t off[8];
};

NodeOffsets element_node_offsets(const GridDims& d) {
  NodeOffsets o{};
  for (int l = 0; l < 8; ++l) {
    const int di = (SGN[l][0] + 1) / 2;
    const int dj = (SGN[l][1] + 1) / 2;
    const int dk = (SGN[l][2] + 1) / 2;
    o.off[l] = d.node(di, dj, dk);
  }
  return o;
}

void check_thermal(const ThermalProblem& p) {
  validate_dims(p.dims);
  if (p.conductivity.size() != p.dims.cellCount()) throw std::invalid_argument("thermal: conductivity size mismatch");
  if (p.load.size() != p.dims.nodeCount()) throw std::invalid_argument("thermal: load size mismatch");
  if ((p.conductivity <= 0.0).any()) throw std::invalid_argument("thermal: conductivities must be positive");
}

void check_elastic(const ElasticProblem& p) {
  validate_dims(p.dims);
  if (p.stiffness.size() != p.dims.cellCount()) throw std::invalid_argument("elastic: stiffness size mismatch");
  if (p.load.size() != 3 * p.dims.nodeCount()) throw std::invalid_argument("elastic: load size mismatch");
  if ((p.stiffness <= 0.0).any()) throw std::invalid_argument("elastic: stiffness must be positive");
  if (p.eigenstrain.rows() != 0 && p.eigenstrain.rows() != p.dims.cellCount())
    throw std::invalid_argument("elastic: eigenstrain rows mismatch");
  if (!p.active.empty() && std::int64_t(p.active.size()) != p.dims.cellCount())
    throw std::invalid_argument("elastic: active mask size mismatch");
}

}  // namespace

Eigen::Matrix<double, 8, 8> thermal_element_matrix(double h) {
  Eigen::Matrix<double, 8, 8> K = Eigen::Matrix<double, 8, 8>::Zero();
  const double detJw = (h / 2.0) * (h / 2.0) * (h / 2.0);
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b)
      for (int c = 0; c < 2; ++c) {
        const auto g = shape_gradients((2 * a - 1) * kGauss, (2 * b - 1) * kGauss, (2 * c - 1) * kGauss, h);
        K += g.transpose() * g * detJw;
      }
  return K;
}

Eigen::Matrix<double, 6, 6> elastic_moduli(double nu) {
  Eigen::Matrix<double, 6, 6> C = Eigen::Matrix<double, 6, 6>::Zero();
  const double f = 1.0 / ((1.0 + nu) * (1.0 - 2.0 * nu));
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b) C(a, b) = f * (a == b ? 1.0 - nu : nu);
  for (int a = 3; a < 6; ++a) C(a, a) = f * (1.0 - 2.0 * nu) / 2.0;
  return C;
}

Eigen::Matrix<double, 24, 24> elastic_element_matrix(double h, double nu) {
  Eigen::Matrix<double, 24, 24> K = Eigen::Matrix<double, 24, 24>::Zero();
  const Eigen::Matrix<double, 6, 6> C = elastic_moduli(nu);
  const double detJw = (h / 2.0) * (h / 2.0) * (h / 2.0);
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b)
      for (int c = 0; c < 2; ++c) {
        const auto B = strain_displacement(
            shape_gradients((2 * a - 1) * kGauss, (2 * b - 1) * kGauss, (2 * c - 1) * kGauss, h));
        K += B.transpose() * C * B * detJw;
      }
  return K;
}

Eigen::Matrix<double, 6, 24> elastic_centroid_b(double h) {
  return strain_displacement(shape_gradients(0.0, 0.0, 0.0, h));
}

void gather_element_u(const GridDims& dims, int i, int j, int k, const Eigen::VectorXd& u,
                      Eigen::Matrix<double, 24, 1>& ue) {
  const std::int64_t base = dims.node(i, j, k);
  const NodeOffsets o = element_node_offsets(dims);
  for (int l = 0; l < 8; ++l) {
    const std::int64_t n = base + o.off[l];
    ue[3 * l + 0] = u[3 * n + 0];
    ue[3 * l + 1] = u[3 * n + 1];
    ue[3 * l + 2] = u[3 * n + 2];
  }
}

namespace {

struct ThermalWorkspace {
  Eigen::Matrix<double, 8, 8> Ke;
  NodeOffsets off;
  Eigen::VectorXd masked;
};

struct ElasticWorkspace {
  Eigen::Matrix<double, 24, 24> Ke;
  NodeOffsets off;
  Eigen::VectorXd masked;
};

}  // namespace

LinearOperator thermal_operator(const ThermalProblem& prob) {
  check_thermal(prob);
  const GridDims d = prob.dims;
  auto ws = std::make_shared<ThermalWorkspace>();
  ws->Ke = thermal_element_matrix(d.h);
  ws->off = element_node_offsets(d);
  ws->masked.resize(d.nodeCount());

  LinearOperator op;
  op.n = d.nodeCount();
  op.freeMask = Eigen::VectorXd::Ones(op.n);
  for (std::int64_t nd : prob.dirichletNodes) op.freeMask[nd] = 0.0;

  op.diag = Eigen::VectorXd::Zero(op.n);
  const Eigen::Matrix<double, 8, 1> kdiag = ws->Ke.diagonal();
  for (int k = 0; k < d.nz; ++k)
    for (int j = 0; j < d.ny; ++j)
      for (int i = 0; i < d.nx; ++i) {
        const double ke = prob.conductivity[d.cell(i, j, k)];
        const std::int64_t base = d.node(i, j, k);
        for (int l = 0; l < 8; ++l) op.diag[base + ws->off.off[l]] += ke * kdiag[l];
      }
  for (std::int64_t n = 0; n < op.n; ++n) {
    if (op.diag[n] == 0.0) op.freeMask[n] = 0.0;  // untouched node
    if (op.freeMask[n] == 0.0) op.diag[n] = 1.0;
  }

  const ArrayX<double>* cond = &prob.conductivity;
  const Eigen::VectorXd* fm = &op.freeMask;
  op.apply = [d, ws, cond, fm](const Eigen::VectorXd& x, Eigen::VectorXd& y) {
    ws->masked = x.cwiseProduct(*fm);
    y.setZero();
    Eigen::Matrix<double, 8, 1> ue, ye;
    for (int k = 0; k < d.nz; ++k)
      for (int j = 0; j < d.ny; ++j)
        for (int i = 0; i < d.nx; ++i) {
          const double ke = (*cond)[d.cell(i, j, k)];
          const std::int64_t base = d.node(i, j, k);
          for (int l = 0; l < 8; ++l) ue[l] = ws->masked[base + ws->off.off[l]];
          ye.noalias() = ke * (ws->Ke * ue);
          for (int l = 0; l < 8; ++l) y[base + ws->off.off[l]] += ye[l];
        }
    y = y.cwiseProduct(*fm) + x - x.cwiseProduct(*fm);
  };
  return op;
}

LinearOperator elastic_operator(const ElasticProblem& prob) {
  check_elastic(prob);
  const GridDims d = prob.dims;
  auto ws = std::make_shared<ElasticWorkspace>();
  ws->Ke = elastic_element_matrix(d.h, prob.nu);
  ws->off = element_node_offsets(d);
  ws->masked.resize(3 * d.nodeCount());

  LinearOperator op;
  op.n = 3 * d.nodeCount();
  op.freeMask = Eigen::VectorXd::Ones(op.n);
  for (std::int64_t dof : prob.fixedDofs) op.freeMask[dof] = 0.0;

  const std::uint8_t* act = prob.active.empty() ? nullptr : prob.active.data();
  op.diag = Eigen::VectorXd::Zero(op.n);
  const Eigen::Matrix<double, 24, 1> kdiag = ws->Ke.diagonal();
  for (int k = 0; k < d.nz; ++k)
    for (int j = 0; j < d.ny; ++j)
      for (int i = 0; i < d.nx; ++i) {
        const std::int64_t e = d.cell(i, j, k);
        if (act && !act[e]) continue;
        const double Ee = prob.stiffness[e];
        const std::int64_t base = d.node(i, j, k);
        for (int l = 0; l < 8; ++l) {
          const std::int64_t n = base + ws->off.off[l];
          for (int c = 0; c < 3; ++c) op.diag[3 * n + c] += Ee * kdiag[3 * l + c];
        }
      }
  for (std::int64_t n = 0; n < op.n; ++n) {
    if (op.diag[n] == 0.0) op.freeMask[n] = 0.0;
    if (op.freeMask[n] == 0.0) op.diag[n] = 1.0;
  }

  const ArrayX<double>* stiff = &prob.stiffness;
  const Eigen::VectorXd* fm = &op.freeMask;
  op.apply = [d, ws, stiff, fm, act](const Eigen::VectorXd& x, Eigen::VectorXd& y) {
    ws->masked = x.cwiseProduct(*fm);
    y.setZero();
    Eigen::Matrix<double, 24, 1> ue, ye;
    for (int k = 0; k < d.nz; ++k)
      for (int j = 0; j < d.ny; ++j)
        for (int i = 0; i < d.nx; ++i) {
          const std::int64_t e = d.cell(i, j, k);
          if (act && !act[e]) continue;
          const double Ee = (*stiff)[e];
          const std::int64_t base = d.node(i, j, k);
          for (int l = 0; l < 8; ++l) {
            const std::int64_t n = base + ws->off.off[l];
            ue[3 * l + 0] = ws->masked[3 * n + 0];
            ue[3 * l + 1] = ws->masked[3 * n + 1];
            ue[3 * l + 2] = ws->masked[3 * n + 2];
          }
          ye.noalias() = Ee * (ws->Ke * ue);
          for (int l = 0; l < 8; ++l) {
            const std::int64_t n = base + ws->off.off[l];
            y[3 * n + 0] += ye[3 * l + 0];
            y[3 * n + 1] += ye[3 * l + 1];
            y[3 * n + 2] += ye[3 * l + 2];
          }
        }
    y = y.cwiseProduct(*fm) + x - x.cwiseProduct(*fm);
  };
  return op;
}

CgStats pcg(const LinearOperator& op, const Eigen::VectorXd& b, Eigen::VectorXd& x,
            const SolverOpts& opts) {
  CgStats stats;
  const std::int64_t n = op.n;
  if (b.size() != n) throw std::invalid_argument("pcg: rhs size mismatch");
  if (x.size() != n) x = Eigen::VectorXd::Zero(n);

  const Eigen::VectorXd bp = b.cwiseProduct(op.freeMask);
  const double normb = bp.norm();
  if (normb == 0.0) {
    x.setZero();
    return stats;
  }

  Eigen::VectorXd Ax(n), r(n), z(n), p(n), Ap(n);
  op.apply(x, Ax);
  r = bp - Ax;
  double energy = 0.5 * x.dot(Ax) - bp.dot(x);
  if (opts.recordEnergy) stats.energy.push_back(energy);

  z = opts.jacobi ? Eigen::VectorXd(r.cwiseQuotient(op.diag)) : r;
  p = z;
  double rz = r.dot(z);
  double relres = r.norm() / normb;
  for (int it = 0; it < opts.cgMaxIter && relres > opts.cgTol; ++it) {
    op.apply(p, Ap);
    const double pAp = p.dot(Ap);
    if (!(pAp > 0.0))
      throw SolverError("pcg: operator not positive definite", relres, stats.iterations);
    const double alpha = rz / pAp;
    x += alpha * p;
    r -= alpha * Ap;
    energy -= 0.5 * alpha * rz;
    if (opts.recordEnergy) stats.energy.push_back(energy);
    z = opts.jacobi ? Eigen::VectorXd(r.cwiseQuotient(op.diag)) : r;
    const double rzNew = r.dot(z);
    p = z + (rzNew / rz) * p;
    rz = rzNew;
    relres = r.norm() / normb;
    ++stats.iterations;
  }
  stats.relResidual = relres;
  if (relres > opts.cgTol)
    throw SolverError("pcg: no convergence after " + std::to_string(stats.iterations) +
                          " iterations (relative residual " + std::to_string(relres) + ")",
                      relres, stats.iterations);
  return stats;
}

Eigen::VectorXd eigenstrain_loads(const ElasticProblem& prob) {
  check_elastic(prob);
  const GridDims d = prob.dims;
  Eigen::VectorXd f = Eigen::VectorXd::Zero(3 * d.nodeCount());
  if (prob.eigenstrain.rows() == 0) return f;
  const double V = d.h * d.h * d.h;
  // For a regular hex, int_B dV equals the centroid B times the volume.
  const Eigen::Matrix<double, 24, 6> M =
      V * elastic_centroid_b(d.h).transpose() * elastic_moduli(prob.nu);
  const NodeOffsets off = element_node_offsets(d);
  const std::uint8_t* act = prob.active.empty() ? nullptr : prob.active.data();
  Eigen::Matrix<double, 6, 1> eps;
  Eigen::Matrix<double, 24, 1> fe;
  for (int k = 0; k < d.nz; ++k)
    for (int j = 0; j < d.ny; ++j)
      for (int i = 0; i < d.nx; ++i) {
        const std::int64_t e = d.cell(i, j, k);
        if (act && !act[e]) continue;
        eps[0] = prob.eigenstrain(e, CXX);
        eps[1] = prob.eigenstrain(e, CYY);
        eps[2] = prob.eigenstrain(e, CZZ);
        eps[3] = 2.0 * prob.eigenstrain(e, CXY);  // engineering shear
        eps[4] = 2.0 * prob.eigenstrain(e, CYZ);
        eps[5] = 2.0 * prob.eigenstrain(e, CXZ);
        if ((eps.array() == 0.0).all()) continue;
        fe.noalias() = prob.stiffness[e] * (M * eps);
        const std::int64_t base = d.node(i, j, k);
        for (int l = 0; l < 8; ++l) {
          const std::int64_t n = base + off.off[l];
          f[3 * n + 0] += fe[3 * l + 0];
          f[3 * n + 1] += fe[3 * l + 1];
          f[3 * n + 2] += fe[3 * l + 2];
        }
      }
  return f;
}

Eigen::VectorXd solve_thermal(const ThermalProblem& prob, const SolverOpts& opts, CgStats* stats,
                              const Eigen::VectorXd* warmStart) {
  LinearOperator op = thermal_operator(prob);
  Eigen::VectorXd u = warmStart ? *warmStart : Eigen::VectorXd::Zero(op.n);
  CgStats s = pcg(op, prob.load, u, opts);
  if (stats) *stats = s;
  return u;
}

Eigen::VectorXd solve_elastic(const ElasticProblem& prob, const SolverOpts& opts, CgStats* stats,
                              const Eigen::VectorXd* warmStart) {
  LinearOperator op = elastic_operator(prob);
  Eigen::VectorXd f = prob.load + eigenstrain_loads(prob);
  Eigen::VectorXd u = warmStart ? *warmStart : Eigen::VectorXd::Zero(op.n);
  CgStats s = pcg(op, f, u, opts);
  if (stats) *stats = s;
  return u;
}

StressStrain element_stress_strain(const ElasticProblem& prob, const Eigen::VectorXd& u) {
  check_elastic(prob);
  const GridDims d = prob.dims;
  StressStrain out{make_tensor_field<double>(d), make_tensor_field<double>(d)};
  const Eigen::Matrix<double, 6, 24> B = elastic_centroid_b(d.h);
  const Eigen::Matrix<double, 6, 6> C = elastic_moduli(prob.nu);
  const std::uint8_t* act = prob.active.empty() ? nullptr : prob.active.data();
  Eigen::Matrix<double, 24, 1> ue;
  Eigen::Matrix<double, 6, 1> epsEng, sig;
  for (int k = 0; k < d.nz; ++k)
    for (int j = 0; j < d.ny; ++j)
      for (int i = 0; i < d.nx; ++i) {
        const std::int64_t e = d.cell(i, j, k);
        if (act && !act[e]) continue;
        gather_element_u(d, i, j, k, u, ue);
        epsEng.noalias() = B * ue;
        Eigen::Matrix<double, 6, 1> epsStar = Eigen::Matrix<double, 6, 1>::Zero();
        if (prob.eigenstrain.rows() != 0) {
          epsStar[0] = prob.eigenstrain(e, CXX);
          epsStar[1] = prob.eigenstrain(e, CYY);
          epsStar[2] = prob.eigenstrain(e, CZZ);
          epsStar[3] = 2.0 * prob.eigenstrain(e, CXY);
          epsStar[4] = 2.0 * prob.eigenstrain(e, CYZ);
          epsStar[5] = 2.0 * prob.eigenstrain(e, CXZ);
        }
        sig.noalias() = prob.stiffness[e] * (C * (epsEng - epsStar));
        out.strain.comp(e, CXX) = epsEng[0];
        out.strain.comp(e, CYY) = epsEng[1];
        out.strain.comp(e, CZZ) = epsEng[2];
        out.strain.comp(e, CXY) = 0.5 * epsEng[3];
        out.strain.comp(e, CYZ) = 0.5 * epsEng[4];
        out.strain.comp(e, CXZ) = 0.5 * epsEng[5];
        out.stress.comp(e, CXX) = sig[0];
        out.stress.comp(e, CYY) = sig[1];
        out.stress.comp(e, CZZ) = sig[2];
        out.stress.comp(e, CXY) = sig[3];
        out.stress.comp(e, CYZ) = sig[4];
        out.stress.comp(e, CXZ) = sig[5];
      }
  return out;
}

ArrayX<double> element_strain_energy_unit(const ThermalProblem& prob, const Eigen::VectorXd& u) {
  check_thermal(prob);
  const GridDims d = prob.dims;
  const Eigen::Matrix<double, 8, 8> Ke = thermal_element_matrix(d.h);
  const NodeOffsets off = element_node_offsets(d);
  ArrayX<double> e = ArrayX<double>::Zero(d.cellCount());
  Eigen::Matrix<double, 8, 1> ue;
  for (int k = 0; k < d.nz; ++k)
    for (int j = 0; j < d.ny; ++j)
      for (int i = 0; i < d.nx; ++i) {
        const std::int64_t base = d.node(i, j, k);
        for (int l = 0; l < 8; ++l) ue[l] = u[base + off.off[l]];
        e[d.cell(i, j, k)] = ue.dot(Ke * ue);
      }
  return e;
}

ArrayX<double> element_strain_energy_unit(const ElasticProblem& prob, const Eigen::VectorXd& u) {
  check_elastic(prob);
  const GridDims d = prob.dims;
  const Eigen::Matrix<double, 24, 24> Ke = elastic_element_matrix(d.h, prob.nu);
  ArrayX<double> e = ArrayX<double>::Zero(d.cellCount());
  Eigen::Matrix<double, 24, 1> ue;
  for (int k = 0; k < d.nz; ++k)
    for (int j = 0; j < d.ny; ++j)
      for (int i = 0; i < d.nx; ++i) {
        gather_element_u(d, i, j, k, u, ue);
        e[d.cell(i, j, k)] = ue.dot(Ke * ue);
      }
  return e;
}

}  // namespace pato
