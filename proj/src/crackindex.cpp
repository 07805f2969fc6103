#include "pato/crackindex.hpp"

#include "pato/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace pato {

Eigen::Vector3d principal_values(const Eigen::Matrix3d& t) {
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(t, Eigen::EigenvaluesOnly);
  return es.eigenvalues().reverse();
}

double mean_stress(const Eigen::Matrix3d& sigma) { return sigma.trace() / 3.0; }

double von_mises_stress(const Eigen::Matrix3d& sigma) {
  const Eigen::Matrix3d s = sigma - mean_stress(sigma) * Eigen::Matrix3d::Identity();
  return std::sqrt(1.5 * (s.array() * s.array()).sum());
}

double von_mises_strain(const Eigen::Matrix3d& eps) {
  const Eigen::Matrix3d e = eps - (eps.trace() / 3.0) * Eigen::Matrix3d::Identity();
  return std::sqrt((2.0 / 3.0) * (e.array() * e.array()).sum());
}

double triaxiality(const Eigen::Matrix3d& sigma, double tolAbs) {
  const double vm = von_mises_stress(sigma);
  if (vm < tolAbs) return 0.0;
  return mean_stress(sigma) / vm;
}

CrackPoint crack_indices(const Eigen::Matrix3d& sigma, const Eigen::Matrix3d& eps,
                         const MaterialSpec& mat) {
  validate_material(mat);
  CrackPoint out;
  out.tau = triaxiality(sigma, 1e-9 * mat.E0);
  const double epsBar = std::max(0.0, von_mises_strain(eps) - mat.sigmaYield / mat.E0);
  out.sfi = out.tau * epsBar / mat.epsUTS;
  const Eigen::Vector3d pe = principal_values(eps);
  out.mssi = out.tau * (pe[0] - pe[2]) / mat.epsUTS;
  const Eigen::Vector3d ps = principal_values(sigma);
  out.tsi = out.tau * ps.dot(pe) / (mat.sigmaUTS * mat.epsUTS);
  return out;
}

CrackFields crack_field_from_build(const BuildResult& result, const MaterialSpec& mat) {
  validate_material(mat);
  const GridDims& d = result.stress.dims;
  CrackFields f;
  for (FieldD* p : {&f.sfi, &f.mssi, &f.tsi, &f.tau, &f.vonMises, &f.meanStress,
                    &f.maxPrincipalStress, &f.equivalentStress})
    *p = make_field<double>(d);
  for (std::int64_t v = 0; v < d.cellCount(); ++v) {
    if (!result.everActive[size_t(v)]) continue;
    const Eigen::Matrix3d sigma = result.stress.matrixAt(v);
    const Eigen::Matrix3d eps = result.elasticStrain.matrixAt(v);
    const CrackPoint p = crack_indices(sigma, eps, mat);
    f.sfi.values[v] = p.sfi;
    f.mssi.values[v] = p.mssi;
    f.tsi.values[v] = p.tsi;
    f.tau.values[v] = p.tau;
    const double vm = von_mises_stress(sigma);
    f.vonMises.values[v] = vm;
    f.equivalentStress.values[v] = vm;
    f.meanStress.values[v] = mean_stress(sigma);
    f.maxPrincipalStress.values[v] = principal_values(sigma)[0];
  }
  return f;
}

FieldSummary summarize_field(const FieldD& f) {
  if (f.size() == 0) throw std::invalid_argument("field summary: empty field");
  FieldSummary s;
  std::int64_t arg = 0;
  s.maxValue = f.values[0];
  for (std::int64_t v = 1; v < f.size(); ++v)
    if (f.values[v] > s.maxValue) {
      s.maxValue = f.values[v];
      arg = v;
    }
  s.i = int(arg % f.dims.nx);
  s.j = int((arg / f.dims.nx) % f.dims.ny);
  s.k = int(arg / (std::int64_t(f.dims.nx) * f.dims.ny));
  std::vector<double> sorted(f.values.data(), f.values.data() + f.size());
  std::sort(sorted.begin(), sorted.end());
  const std::int64_t rank = std::int64_t(std::ceil(0.99 * double(f.size())));
  s.p99 = sorted[size_t(std::max<std::int64_t>(rank, 1) - 1)];
  return s;
}

namespace {

std::vector<std::pair<std::string, const FieldD*>> named_fields(const CrackFields& f) {
  return {{"sfi", &f.sfi},
          {"mssi", &f.mssi},
          {"tsi", &f.tsi},
          {"tau", &f.tau},
          {"von_mises", &f.vonMises},
          {"mean_stress", &f.meanStress},
          {"max_principal_stress", &f.maxPrincipalStress},
          {"equivalent_stress", &f.equivalentStress}};
}

}  // namespace

void write_crack_summary_csv(const std::string& path, const CrackFields& fields) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << "field,max,argmax_i,argmax_j,argmax_k,p99\n";
  char buf[64];
  for (const auto& [name, f] : named_fields(fields)) {
    const FieldSummary s = summarize_field(*f);
    out << name << ',';
    std::snprintf(buf, sizeof buf, "%.17g", s.maxValue);
    out << buf << ',' << s.i << ',' << s.j << ',' << s.k << ',';
    std::snprintf(buf, sizeof buf, "%.17g", s.p99);
    out << buf << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

void write_crack_vtk(const std::string& path, const CrackFields& fields) {
  write_vtk(path, named_fields(fields));
}

}  // namespace pato
