#include "doctest.h"

#include "pato/crackindex.hpp"
#include "pato/rng.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>

using namespace pato;

namespace {

// Independent oracle: closed-form roots of the characteristic cubic of a
// symmetric 3x3 via the trigonometric method, sorted descending.
Eigen::Vector3d principal_ref(const Eigen::Matrix3d& A) {
  const double p1 = A(0, 1) * A(0, 1) + A(0, 2) * A(0, 2) + A(1, 2) * A(1, 2);
  Eigen::Vector3d v;
  if (p1 == 0.0) {
    v << A(0, 0), A(1, 1), A(2, 2);
  } else {
    const double q = A.trace() / 3.0;
    const double p2 = (A(0, 0) - q) * (A(0, 0) - q) + (A(1, 1) - q) * (A(1, 1) - q) +
                      (A(2, 2) - q) * (A(2, 2) - q) + 2.0 * p1;
    const double p = std::sqrt(p2 / 6.0);
    const Eigen::Matrix3d B = (A - q * Eigen::Matrix3d::Identity()) / p;
    const double r = std::clamp(B.determinant() / 2.0, -1.0, 1.0);
    const double phi = std::acos(r) / 3.0;
    const double e1 = q + 2.0 * p * std::cos(phi);
    const double e3 = q + 2.0 * p * std::cos(phi + 2.0 * std::numbers::pi / 3.0);
    v << e1, 3.0 * q - e1 - e3, e3;
  }
  std::sort(v.data(), v.data() + 3, std::greater<double>());
  return v;
}

Eigen::Matrix3d random_symmetric(std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  Eigen::Matrix3d m;
  for (int a = 0; a < 3; ++a)
    for (int b = a; b < 3; ++b) m(a, b) = m(b, a) = u(rng);
  return m;
}

Eigen::Matrix3d random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::Matrix3d m;
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b) m(a, b) = n(rng);
  Eigen::Matrix3d q = Eigen::HouseholderQR<Eigen::Matrix3d>(m).householderQ();
  if (q.determinant() < 0.0) q.col(0) *= -1.0;
  return q;
}

// isotropic elastic strain for a given stress (coaxial by construction)
Eigen::Matrix3d elastic_strain_of(const Eigen::Matrix3d& sigma, const MaterialSpec& mat) {
  return ((1.0 + mat.nu) * sigma - mat.nu * sigma.trace() * Eigen::Matrix3d::Identity()) / mat.E0;
}

}  // namespace

TEST_CASE("principal values match the characteristic-cubic roots") {
  Eigen::Matrix3d diag = Eigen::Vector3d(3.0, 1.0, 2.0).asDiagonal();
  const Eigen::Vector3d pd = principal_values(diag);
  CHECK(pd[0] == doctest::Approx(3.0));
  CHECK(pd[1] == doctest::Approx(2.0));
  CHECK(pd[2] == doctest::Approx(1.0));

  const Eigen::Vector3d pz = principal_values(Eigen::Matrix3d::Zero());
  CHECK(pz.cwiseAbs().maxCoeff() == 0.0);

  auto rng = substream(101, "principal");
  for (int trial = 0; trial < 200; ++trial) {
    const Eigen::Matrix3d t = random_symmetric(rng);
    const Eigen::Vector3d got = principal_values(t);
    const Eigen::Vector3d want = principal_ref(t);
    for (int c = 0; c < 3; ++c) CHECK(std::abs(got[c] - want[c]) <= 1e-9);
    CHECK(got[0] >= got[1]);
    CHECK(got[1] >= got[2]);
  }
}

TEST_CASE("triaxiality covers the canonical states") {
  Eigen::Matrix3d uni = Eigen::Matrix3d::Zero();
  uni(0, 0) = 700.0;
  CHECK(triaxiality(uni, 1e-9) == doctest::Approx(1.0 / 3.0).epsilon(1e-14));

  Eigen::Matrix3d shear = Eigen::Matrix3d::Zero();
  shear(0, 1) = shear(1, 0) = 55.0;
  CHECK(triaxiality(shear, 1e-9) == 0.0);

  const Eigen::Matrix3d hydro = 120.0 * Eigen::Matrix3d::Identity();
  CHECK(von_mises_stress(hydro) <= 1e-10);
  CHECK(triaxiality(hydro, 1e-4) == 0.0);  // clamped, not infinite
}

TEST_CASE("crack indices reproduce the uniaxial hand chain") {
  MaterialSpec mat;
  const double s = 1300.0;
  Eigen::Matrix3d sigma = Eigen::Matrix3d::Zero();
  sigma(0, 0) = s;
  const Eigen::Matrix3d eps = elastic_strain_of(sigma, mat);
  CHECK(eps(0, 0) == doctest::Approx(s / mat.E0).epsilon(1e-14));
  CHECK(eps(1, 1) == doctest::Approx(-mat.nu * s / mat.E0).epsilon(1e-14));

  const CrackPoint p = crack_indices(sigma, eps, mat);
  CHECK(p.tau == doctest::Approx(1.0 / 3.0).epsilon(1e-13));

  const double mssiWant = (1.0 + mat.nu) * s / (3.0 * mat.E0 * mat.epsUTS);
  CHECK(p.mssi == doctest::Approx(mssiWant).epsilon(1e-12));

  const double epsEq = (2.0 * (1.0 + mat.nu) / 3.0) * s / mat.E0;
  const double sfiWant = (1.0 / 3.0) * (epsEq - mat.sigmaYield / mat.E0) / mat.epsUTS;
  CHECK(sfiWant > 0.0);
  CHECK(p.sfi == doctest::Approx(sfiWant).epsilon(1e-12));

  const double tsiWant = (1.0 / 3.0) * (s * s / mat.E0) / (mat.sigmaUTS * mat.epsUTS);
  CHECK(p.tsi == doctest::Approx(tsiWant).epsilon(1e-12));

  // below the yield surrogate the strain-to-failure index vanishes exactly
  sigma(0, 0) = 600.0;
  const CrackPoint low = crack_indices(sigma, elastic_strain_of(sigma, mat), mat);
  CHECK(low.sfi == 0.0);
  CHECK(low.mssi > 0.0);
}

TEST_CASE("crack indices vanish with the state and with triaxiality") {
  MaterialSpec mat;
  const CrackPoint zero = crack_indices(Eigen::Matrix3d::Zero(), Eigen::Matrix3d::Zero(), mat);
  CHECK(zero.sfi == 0.0);
  CHECK(zero.mssi == 0.0);
  CHECK(zero.tsi == 0.0);
  CHECK(zero.tau == 0.0);

  // pure shear: tau = 0 kills all three even at large strain
  Eigen::Matrix3d shear = Eigen::Matrix3d::Zero();
  shear(0, 2) = shear(2, 0) = 900.0;
  const CrackPoint sh = crack_indices(shear, elastic_strain_of(shear, mat), mat);
  CHECK(sh.tau == 0.0);
  CHECK(sh.sfi == 0.0);
  CHECK(sh.mssi == 0.0);
  CHECK(sh.tsi == 0.0);

  // isotropic strain has no principal spread
  Eigen::Matrix3d uni = Eigen::Matrix3d::Zero();
  uni(0, 0) = 400.0;
  const CrackPoint iso = crack_indices(uni, 0.002 * Eigen::Matrix3d::Identity(), mat);
  CHECK(iso.tau == doctest::Approx(1.0 / 3.0));
  CHECK(iso.mssi == 0.0);
}

TEST_CASE("crack indices are invariant under a common rotation") {
  MaterialSpec mat;
  auto rng = substream(102, "rotation");
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::Matrix3d sigma = random_symmetric(rng, 800.0);
    const Eigen::Matrix3d eps = elastic_strain_of(sigma, mat);
    const Eigen::Matrix3d r = random_rotation(rng);
    const CrackPoint a = crack_indices(sigma, eps, mat);
    const CrackPoint b = crack_indices(r * sigma * r.transpose(), r * eps * r.transpose(), mat);
    CHECK(b.tau == doctest::Approx(a.tau).epsilon(1e-9));
    CHECK(b.sfi == doctest::Approx(a.sfi).epsilon(1e-9));
    CHECK(b.mssi == doctest::Approx(a.mssi).epsilon(1e-9));
    CHECK(b.tsi == doctest::Approx(a.tsi).epsilon(1e-9));
  }
}

TEST_CASE("the slip index scales linearly with strain at fixed triaxiality") {
  MaterialSpec mat;
  auto rng = substream(103, "scaling");
  const Eigen::Matrix3d sigma = random_symmetric(rng, 500.0);
  const Eigen::Matrix3d eps = elastic_strain_of(sigma, mat);
  const CrackPoint one = crack_indices(sigma, eps, mat);
  const double c = 2.75;
  const CrackPoint scaled = crack_indices(c * sigma, c * eps, mat);
  CHECK(scaled.tau == doctest::Approx(one.tau).epsilon(1e-12));
  CHECK(scaled.mssi == doctest::Approx(c * one.mssi).epsilon(1e-12));
}

TEST_CASE("crack fields from a build honor the point formulas and void voxels") {
  const GridDims d{1, 1, 1, 0.5};
  FieldD rho = make_field<double>(d);
  rho.values.setOnes();
  MaterialSpec mat;
  BuildSpec spec;
  for (int j = 0; j <= 1; ++j)
    for (int i = 0; i <= 1; ++i)
      for (int c = 0; c < 3; ++c) spec.extraFixedDofs.push_back(3 * d.node(i, j, 1) + c);
  const BuildResult r = simulate_build(rho, mat, spec);
  const CrackFields f = crack_field_from_build(r, mat);
  const CrackPoint p = crack_indices(r.stress.matrixAt(0), r.elasticStrain.matrixAt(0), mat);
  CHECK(f.sfi.values[0] == p.sfi);
  CHECK(f.mssi.values[0] == p.mssi);
  CHECK(f.tsi.values[0] == p.tsi);
  CHECK(f.tau.values[0] == p.tau);
  CHECK(f.vonMises.values[0] == doctest::Approx(von_mises_stress(r.stress.matrixAt(0))));
  CHECK(f.equivalentStress.values[0] == f.vonMises.values[0]);
  CHECK(f.maxPrincipalStress.values[0] ==
        doctest::Approx(principal_values(r.stress.matrixAt(0))[0]));
  CHECK(f.mssi.values[0] > 0.0);

  // a build with a void region keeps every index exactly zero there
  const GridDims dc{3, 3, 3, 0.5};
  FieldD col = make_field<double>(dc);
  for (int k = 0; k < dc.nz; ++k) col.at(1, 1, k) = 1.0;
  const BuildResult rc = simulate_build(col, mat, BuildSpec{});
  const CrackFields fc = crack_field_from_build(rc, mat);
  for (std::int64_t v = 0; v < dc.cellCount(); ++v) {
    if (rc.everActive[size_t(v)]) continue;
    CHECK(fc.mssi.values[v] == 0.0);
    CHECK(fc.tau.values[v] == 0.0);
    CHECK(fc.maxPrincipalStress.values[v] == 0.0);
  }
  CHECK(fc.mssi.values.maxCoeff() > 0.0);

  // a stress-free build zeroes everything
  BuildSpec calm;
  calm.inherent = {0.0, 0.0, 0.0};
  const CrackFields fz = crack_field_from_build(simulate_build(col, mat, calm), mat);
  CHECK(fz.mssi.values.abs().maxCoeff() == 0.0);
  CHECK(fz.vonMises.values.abs().maxCoeff() == 0.0);
}

TEST_CASE("field summary finds the first argmax and the nearest-rank percentile") {
  const GridDims d{10, 5, 4, 1.0};
  FieldD f = make_field<double>(d);
  std::vector<double> vals(200);
  for (int n = 0; n < 200; ++n) vals[size_t(n)] = double(n + 1);
  auto rng = substream(104, "shuffle");
  std::shuffle(vals.begin(), vals.end(), rng);
  for (std::int64_t v = 0; v < 200; ++v) f.values[v] = vals[size_t(v)];
  const FieldSummary s = summarize_field(f);
  CHECK(s.maxValue == 200.0);
  CHECK(f.at(s.i, s.j, s.k) == 200.0);
  CHECK(s.p99 == 198.0);  // rank ceil(0.99*200) = 198

  FieldD tie = make_field<double>(GridDims{5, 2, 2, 1.0});
  tie.at(3, 0, 1) = 7.5;
  tie.at(4, 1, 1) = 7.5;
  const FieldSummary st = summarize_field(tie);
  CHECK(st.i == 3);
  CHECK(st.j == 0);
  CHECK(st.k == 1);
}

TEST_CASE("crack field exports write every named array") {
  const GridDims d{2, 2, 2, 0.5};
  FieldD rho = make_field<double>(d);
  rho.values.setOnes();
  MaterialSpec mat;
  const CrackFields f = crack_field_from_build(simulate_build(rho, mat, BuildSpec{}), mat);

  const std::string csv = "/tmp/pato_test_crack_summary.csv";
  write_crack_summary_csv(csv, f);
  std::ifstream in(csv);
  REQUIRE(in.good());
  std::string line;
  std::getline(in, line);
  CHECK(line == "field,max,argmax_i,argmax_j,argmax_k,p99");
  int rows = 0;
  bool sawMssi = false;
  while (std::getline(in, line)) {
    ++rows;
    if (line.rfind("mssi,", 0) == 0) sawMssi = true;
  }
  CHECK(rows == 8);
  CHECK(sawMssi);

  const std::string vtk = "/tmp/pato_test_crack_fields.vtk";
  write_crack_vtk(vtk, f);
  std::ifstream vin(vtk);
  REQUIRE(vin.good());
  std::stringstream ss;
  ss << vin.rdbuf();
  const std::string text = ss.str();
  for (const char* name : {"sfi", "mssi", "tsi", "tau", "von_mises", "mean_stress",
                           "max_principal_stress", "equivalent_stress"})
    CHECK(text.find(std::string("SCALARS ") + name + " double") != std::string::npos);
}
