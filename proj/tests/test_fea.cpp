#include "doctest.h"

#include "pato/fea.hpp"
#include "pato/rng.hpp"

#include <random>

using namespace pato;

namespace {

// Consistent nodal loads for a uniform traction t (per area, +x direction)
// on the +x face: every boundary face contributes t*h^2/4 to its four nodes.
ElasticProblem block_traction_x(int nx, int ny, int nz, double h, double E, double nu, double t) {
  ElasticProblem p;
  p.dims = GridDims{nx, ny, nz, h};
  p.nu = nu;
  p.stiffness = ArrayX<double>::Constant(p.dims.cellCount(), E);
  p.load = Eigen::VectorXd::Zero(3 * p.dims.nodeCount());
  const double fn = t * h * h / 4.0;
  for (int k = 0; k < nz; ++k)
    for (int j = 0; j < ny; ++j)
      for (int dk = 0; dk < 2; ++dk)
        for (int dj = 0; dj < 2; ++dj)
          p.load[3 * p.dims.node(nx, j + dj, k + dk) + 0] += fn;
  // ux = 0 on the x=0 plane; uy = 0 along (0, 0, z); uz = 0 along (0, y, 0).
  for (int k = 0; k <= nz; ++k)
    for (int j = 0; j <= ny; ++j) p.fixedDofs.push_back(3 * p.dims.node(0, j, k) + 0);
  for (int k = 0; k <= nz; ++k) p.fixedDofs.push_back(3 * p.dims.node(0, 0, k) + 1);
  for (int j = 0; j <= ny; ++j) p.fixedDofs.push_back(3 * p.dims.node(0, j, 0) + 2);
  return p;
}

ThermalProblem rod_problem(double k, int nzel = 2) {
  ThermalProblem p;
  p.dims = GridDims{1, 1, nzel, 1.0};
  p.conductivity = ArrayX<double>::Constant(nzel, k);
  p.load = Eigen::VectorXd::Zero(p.dims.nodeCount());
  for (int j = 0; j < 2; ++j)
    for (int i = 0; i < 2; ++i) {
      p.dirichletNodes.push_back(p.dims.node(i, j, 0));
      p.load[p.dims.node(i, j, nzel)] = 0.25;  // unit total flux in
    }
  return p;
}

}  // namespace

TEST_CASE("thermal element matrix: symmetric with constant fields in its null space") {
  auto Ke = thermal_element_matrix(0.7);
  CHECK((Ke - Ke.transpose()).cwiseAbs().maxCoeff() < 1e-14);
  Eigen::Matrix<double, 8, 1> ones = Eigen::Matrix<double, 8, 1>::Ones();
  CHECK((Ke * ones).cwiseAbs().maxCoeff() < 1e-13);
}

TEST_CASE("elastic element matrix: symmetric, rigid translations and rotations stress-free") {
  const double h = 1.0;
  auto Ke = elastic_element_matrix(h, 0.3);
  CHECK((Ke - Ke.transpose()).cwiseAbs().maxCoeff() < 1e-12);

  // local node coordinates in element order
  const int off[8][3] = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
                         {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}};
  Eigen::Matrix<double, 24, 1> u;
  for (int c = 0; c < 3; ++c) {
    u.setZero();
    for (int l = 0; l < 8; ++l) u[3 * l + c] = 1.0;
    CHECK((Ke * u).cwiseAbs().maxCoeff() < 1e-12);
  }
  // infinitesimal rotation about x: u = (0, -z, y)
  for (int l = 0; l < 8; ++l) {
    u[3 * l + 0] = 0.0;
    u[3 * l + 1] = -off[l][2] * h;
    u[3 * l + 2] = off[l][1] * h;
  }
  CHECK((Ke * u).cwiseAbs().maxCoeff() < 1e-12);
  // about z: u = (-y, x, 0)
  for (int l = 0; l < 8; ++l) {
    u[3 * l + 0] = -off[l][1] * h;
    u[3 * l + 1] = off[l][0] * h;
    u[3 * l + 2] = 0.0;
  }
  CHECK((Ke * u).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("rod conduction matches the hand-assembled three-node chain") {
  // Independent oracle: 1D chain with unit A*k/h, bottom fixed, unit flux on top.
  Eigen::Matrix2d Kred;
  Kred << 2.0, -1.0, -1.0, 1.0;
  Eigen::Vector2d rhs(0.0, 1.0);
  Eigen::Vector2d T = Kred.fullPivLu().solve(rhs);

  ThermalProblem p = rod_problem(1.0);
  SolverOpts opts;
  opts.cgTol = 1e-12;
  Eigen::VectorXd u = solve_thermal(p, opts);
  for (int j = 0; j < 2; ++j)
    for (int i = 0; i < 2; ++i) {
      CHECK(u[p.dims.node(i, j, 0)] == doctest::Approx(0.0).epsilon(1e-10));
      CHECK(u[p.dims.node(i, j, 1)] == doctest::Approx(T[0]).epsilon(1e-8));
      CHECK(u[p.dims.node(i, j, 2)] == doctest::Approx(T[1]).epsilon(1e-8));
    }
}

TEST_CASE("doubling the conductivity halves the temperatures and the compliance") {
  SolverOpts opts;
  opts.cgTol = 1e-12;
  ThermalProblem p1 = rod_problem(1.0, 3);
  ThermalProblem p2 = rod_problem(2.0, 3);
  Eigen::VectorXd u1 = solve_thermal(p1, opts);
  Eigen::VectorXd u2 = solve_thermal(p2, opts);
  CHECK((u2 * 2.0 - u1).cwiseAbs().maxCoeff() < 1e-9);
  CHECK(compliance(u2, p2.load) == doctest::Approx(0.5 * compliance(u1, p1.load)).epsilon(1e-10));
}

TEST_CASE("zero load gives the zero solution without iterating") {
  ThermalProblem p = rod_problem(1.0);
  p.load.setZero();
  CgStats stats;
  Eigen::VectorXd u = solve_thermal(p, SolverOpts{}, &stats);
  CHECK(u.cwiseAbs().maxCoeff() == 0.0);
  CHECK(stats.iterations == 0);
}

TEST_CASE("compliance is the load-displacement inner product") {
  Eigen::VectorXd u(2), f(2);
  u << 1.0, 1.0;
  f << 1.0, 1.0;
  CHECK(compliance(u, f) == doctest::Approx(2.0));
  Eigen::VectorXd g(3);
  CHECK_THROWS_AS(compliance(u, g), std::invalid_argument);
}

TEST_CASE("patch test: uniform uniaxial stress is reproduced to near machine precision") {
  const double t = 3.5, E = 1000.0, nu = 0.3;
  for (int n : {1, 2}) {
    ElasticProblem p = block_traction_x(n, n, n, 1.0, E, nu, t);
    SolverOpts opts;
    opts.cgTol = 1e-13;
    Eigen::VectorXd u = solve_elastic(p, opts);
    StressStrain ss = element_stress_strain(p, u);
    for (std::int64_t e = 0; e < p.dims.cellCount(); ++e) {
      CHECK(ss.stress.comp(e, CXX) == doctest::Approx(t).epsilon(1e-10));
      CHECK(std::abs(ss.stress.comp(e, CYY)) < t * 1e-10);
      CHECK(std::abs(ss.stress.comp(e, CZZ)) < t * 1e-10);
      CHECK(std::abs(ss.stress.comp(e, CXY)) < t * 1e-10);
      CHECK(std::abs(ss.stress.comp(e, CYZ)) < t * 1e-10);
      CHECK(std::abs(ss.stress.comp(e, CXZ)) < t * 1e-10);
      CHECK(ss.strain.comp(e, CXX) == doctest::Approx(t / E).epsilon(1e-10));
      CHECK(ss.strain.comp(e, CYY) == doctest::Approx(-nu * t / E).epsilon(1e-9));
    }
  }
}

TEST_CASE("fully constrained element under eigenstrain matches the hand-built moduli") {
  const double E = 2.0e5, nu = 0.3;
  ElasticProblem p;
  p.dims = GridDims{1, 1, 1, 1.0};
  p.nu = nu;
  p.stiffness = ArrayX<double>::Constant(1, E);
  p.load = Eigen::VectorXd::Zero(3 * p.dims.nodeCount());
  for (std::int64_t n = 0; n < p.dims.nodeCount(); ++n)
    for (int c = 0; c < 3; ++c) p.fixedDofs.push_back(3 * n + c);
  p.eigenstrain = Eigen::Array<double, Eigen::Dynamic, 6>::Zero(1, 6);
  const double exx = -0.010295, eyy = -0.010295, ezz = -0.03, exy = 0.004;
  p.eigenstrain(0, CXX) = exx;
  p.eigenstrain(0, CYY) = eyy;
  p.eigenstrain(0, CZZ) = ezz;
  p.eigenstrain(0, CXY) = exy;

  Eigen::VectorXd u = solve_elastic(p, SolverOpts{});
  CHECK(u.cwiseAbs().maxCoeff() == 0.0);
  StressStrain ss = element_stress_strain(p, u);

  // independent Lame-constant oracle: sigma = -(lambda tr(e*) I + 2 mu e*)
  const double lam = E * nu / ((1.0 + nu) * (1.0 - 2.0 * nu));
  const double mu = E / (2.0 * (1.0 + nu));
  const double tr = exx + eyy + ezz;
  CHECK(ss.stress.comp(0, CXX) == doctest::Approx(-(lam * tr + 2.0 * mu * exx)).epsilon(1e-8));
  CHECK(ss.stress.comp(0, CYY) == doctest::Approx(-(lam * tr + 2.0 * mu * eyy)).epsilon(1e-8));
  CHECK(ss.stress.comp(0, CZZ) == doctest::Approx(-(lam * tr + 2.0 * mu * ezz)).epsilon(1e-8));
  CHECK(ss.stress.comp(0, CXY) == doctest::Approx(-2.0 * mu * exy).epsilon(1e-8));
  CHECK(ss.stress.comp(0, CYZ) == doctest::Approx(0.0));
  CHECK(ss.stress.comp(0, CXZ) == doctest::Approx(0.0));
}

TEST_CASE("eigenstrain loads are self-equilibrated") {
  ElasticProblem p;
  p.dims = GridDims{2, 2, 2, 0.5};
  p.nu = 0.3;
  p.stiffness = ArrayX<double>::Constant(p.dims.cellCount(), 1.0);
  p.load = Eigen::VectorXd::Zero(3 * p.dims.nodeCount());
  p.eigenstrain = Eigen::Array<double, Eigen::Dynamic, 6>::Zero(p.dims.cellCount(), 6);
  auto rng = substream(13, "eigenstrain-test");
  std::uniform_real_distribution<double> d(-0.02, 0.02);
  for (std::int64_t e = 0; e < p.dims.cellCount(); ++e)
    for (int c = 0; c < 6; ++c) p.eigenstrain(e, c) = d(rng);
  Eigen::VectorXd f = eigenstrain_loads(p);
  double sum[3] = {0, 0, 0};
  for (std::int64_t n = 0; n < p.dims.nodeCount(); ++n)
    for (int c = 0; c < 3; ++c) sum[c] += f[3 * n + c];
  for (int c = 0; c < 3; ++c) CHECK(std::abs(sum[c]) < 1e-12);
}

TEST_CASE("assembled operators are symmetric positive definite on free dofs") {
  ThermalProblem p;
  p.dims = GridDims{2, 2, 3, 1.0};
  auto rng = substream(17, "spd-test");
  std::uniform_real_distribution<double> d(0.5, 2.0);
  p.conductivity = ArrayX<double>::Zero(p.dims.cellCount());
  for (std::int64_t e = 0; e < p.dims.cellCount(); ++e) p.conductivity[e] = d(rng);
  p.load = Eigen::VectorXd::Zero(p.dims.nodeCount());
  p.dirichletNodes = {0, 5};
  LinearOperator op = thermal_operator(p);
  std::uniform_real_distribution<double> v(-1.0, 1.0);
  Eigen::VectorXd x(op.n), y(op.n), Ax(op.n), Ay(op.n);
  for (int trial = 0; trial < 5; ++trial) {
    for (std::int64_t i = 0; i < op.n; ++i) {
      x[i] = v(rng);
      y[i] = v(rng);
    }
    op.apply(x, Ax);
    op.apply(y, Ay);
    CHECK(x.dot(Ax) > 0.0);
    CHECK(x.dot(Ay) == doctest::Approx(y.dot(Ax)).epsilon(1e-10));
  }
}

TEST_CASE("cg energy decreases monotonically") {
  ThermalProblem p;
  p.dims = GridDims{3, 3, 4, 1.0};
  p.conductivity = ArrayX<double>::Constant(p.dims.cellCount(), 1.0);
  p.load = Eigen::VectorXd::Zero(p.dims.nodeCount());
  auto rng = substream(19, "energy-test");
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  for (std::int64_t n = 0; n < p.dims.nodeCount(); ++n) p.load[n] = d(rng);
  for (int j = 0; j < 4; ++j)
    for (int i = 0; i < 4; ++i) p.dirichletNodes.push_back(p.dims.node(i, j, 0));
  SolverOpts opts;
  opts.recordEnergy = true;
  CgStats stats;
  solve_thermal(p, opts, &stats);
  REQUIRE(stats.energy.size() > 2);
  for (size_t i = 1; i < stats.energy.size(); ++i) {
    const double slack = 1e-10 * std::max(1.0, std::abs(stats.energy[i - 1]));
    CHECK(stats.energy[i] <= stats.energy[i - 1] + slack);
  }
}

TEST_CASE("cg reports non-convergence with the residual attached") {
  ThermalProblem p = rod_problem(1.0, 4);
  SolverOpts opts;
  opts.cgMaxIter = 1;
  opts.cgTol = 1e-14;
  try {
    solve_thermal(p, opts);
    FAIL("expected SolverError");
  } catch (const SolverError& err) {
    CHECK(err.iterations == 1);
    CHECK(err.residual > 1e-14);
  }
}

TEST_CASE("inactive elements carry exactly zero stress and leave their nodes pinned") {
  ElasticProblem p;
  p.dims = GridDims{1, 1, 2, 1.0};
  p.nu = 0.3;
  p.stiffness = ArrayX<double>::Constant(2, 100.0);
  p.load = Eigen::VectorXd::Zero(3 * p.dims.nodeCount());
  p.eigenstrain = Eigen::Array<double, Eigen::Dynamic, 6>::Zero(2, 6);
  p.eigenstrain.col(CZZ).setConstant(-0.03);
  p.active = {1, 0};
  for (int j = 0; j < 2; ++j)
    for (int i = 0; i < 2; ++i)
      for (int c = 0; c < 3; ++c) p.fixedDofs.push_back(3 * p.dims.node(i, j, 0) + c);
  Eigen::VectorXd u = solve_elastic(p, SolverOpts{});
  StressStrain ss = element_stress_strain(p, u);
  for (int c = 0; c < 6; ++c) {
    CHECK(ss.stress.comp(1, c) == 0.0);
    CHECK(ss.strain.comp(1, c) == 0.0);
  }
  // top plane nodes touch no active element and stay at zero
  for (int j = 0; j < 2; ++j)
    for (int i = 0; i < 2; ++i)
      for (int c = 0; c < 3; ++c) CHECK(u[3 * p.dims.node(i, j, 2) + c] == 0.0);
  // the active element does deform
  CHECK(u.cwiseAbs().maxCoeff() > 1e-6);
}
