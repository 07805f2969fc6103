#pragma once

#include "pato/buildsim.hpp"
#include "pato/grid.hpp"
#include "pato/material.hpp"

#include <Eigen/Dense>

#include <string>

namespace pato {

/// Eigenvalues of a symmetric 3x3, sorted descending.
Eigen::Vector3d principal_values(const Eigen::Matrix3d& t);

double mean_stress(const Eigen::Matrix3d& sigma);
double von_mises_stress(const Eigen::Matrix3d& sigma);
/// Equivalent total strain sqrt(2/3 e:e) of the deviatoric part (tensor shear).
double von_mises_strain(const Eigen::Matrix3d& eps);

/// mean / von Mises, clamped to 0 when the von Mises stress falls below tolAbs
/// (hydrostatic states have no meaningful ratio).
double triaxiality(const Eigen::Matrix3d& sigma, double tolAbs);

struct CrackPoint {
  double sfi = 0.0;
  double mssi = 0.0;
  double tsi = 0.0;
  double tau = 0.0;
};

/// The three candidate indices at one material point. The strain argument is
/// the stress-generating (elastic) strain, so stress and strain share their
/// principal frame. The model is elastic: the strain-to-failure surrogate in
/// sfi measures equivalent strain past sigmaYield/E0, a stated approximation.
CrackPoint crack_indices(const Eigen::Matrix3d& sigma, const Eigen::Matrix3d& eps,
                         const MaterialSpec& mat);

struct CrackFields {
  FieldD sfi, mssi, tsi, tau;
  FieldD vonMises, meanStress;
  // baseline pair for localization comparisons; equivalentStress carries the
  // same numbers as vonMises in this material model but keeps its own export
  FieldD maxPrincipalStress, equivalentStress;
};

CrackFields crack_field_from_build(const BuildResult& result, const MaterialSpec& mat);

struct FieldSummary {
  double maxValue = 0.0;
  int i = 0, j = 0, k = 0;  // first-in-storage-order argmax
  double p99 = 0.0;         // nearest-rank 99th percentile
};
FieldSummary summarize_field(const FieldD& f);

/// One CSV row per index/diagnostic field: name,max,i,j,k,p99.
void write_crack_summary_csv(const std::string& path, const CrackFields& fields);
void write_crack_vtk(const std::string& path, const CrackFields& fields);

}  // namespace pato
