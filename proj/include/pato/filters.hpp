#pragma once

#include "pato/grid.hpp"

#include <Eigen/Dense>

#include <optional>
#include <vector>

namespace pato {

/// Linear cone-weight smoothing: out_i = sum_j w_ij rho_j / sum_j w_ij with
/// w_ij = max(0, r - dist(i,j)), distances in mm. Backward is the exact
/// transpose. Radius must be at least h; radius equal to h is the identity.
class DensityFilter {
 public:
  DensityFilter(const GridDims& dims, double radius);
  FieldD forward(const FieldD& rho) const;
  FieldD backward(const FieldD& grad) const;
  double radius() const { return radius_; }

 private:
  GridDims dims_;
  double radius_;
  struct Tap {
    int dx, dy, dz;
    double w;
  };
  std::vector<Tap> taps_;
  ArrayX<double> norm_;
};

/// Smooth-operator constants for the overhang filter. P is the smooth-max
/// exponent (>= 4); eps rounds the smooth min. With the defaults the printed
/// field can exceed the true layer minimum by at most sqrt(eps)/2.
struct AmFilterParams {
  double P = 40.0;
  double eps = 1e-6;
};

/// Overhang (self-support) filter: sweeping bottom to top, a voxel prints at
/// most as dense as the smooth max of its five supporting voxels in the layer
/// below (directly below plus the four face neighbors). forward caches the
/// intermediates consumed by backward, so pair the calls on one instance.
class AmFilter {
 public:
  AmFilter(const GridDims& dims, AmFilterParams params = {});
  FieldD forward(const FieldD& blueprint);
  FieldD backward(const FieldD& grad) const;
  const AmFilterParams& params() const { return prm_; }

 private:
  GridDims dims_;
  AmFilterParams prm_;
  FieldD blueprint_;
  FieldD printed_;
  FieldD support_;  // smooth max of the supports, layers k >= 1
  bool haveForward_ = false;
};

/// Mirror-average about the x midplane; an orthogonal projection, so the
/// backward pass is the projection itself.
FieldD symmetry_project_x(const FieldD& f);
inline FieldD symmetry_project_x_backward(const FieldD& g) { return symmetry_project_x(g); }

/// Column average along y (extruded designs); also an orthogonal projection.
FieldD extrusion_project_y(const FieldD& f);
inline FieldD extrusion_project_y_backward(const FieldD& g) { return extrusion_project_y(g); }

enum class FilterStage { Density, AmOverhang, SymmetryX, ExtrusionY };

struct FilterStageSpec {
  FilterStage type = FilterStage::Density;
  double radius = 1.5;    // Density
  AmFilterParams am;      // AmOverhang
};

/// Maps raw design variables to physical densities: smoothing stages in listed
/// order, then passive values reimposed and the result clamped to [0,1] (the
/// clamp only ever trims the smooth-operator overshoot above 1; backward
/// treats it as identity). SymmetryX/ExtrusionY stages are realized as the
/// reduced design-variable parameterization, see DesignSpace.
class FilterChain {
 public:
  FilterChain(const RegionMask& mask, std::vector<FilterStageSpec> stages);

  bool symmetryX() const { return symX_; }
  bool extrusionY() const { return extY_; }

  FieldD forward(const FieldD& raw);
  FieldD backward(const FieldD& gradPhys) const;

 private:
  RegionMask mask_;
  std::vector<FilterStageSpec> specs_;  // smoothing stages only, listed order
  std::vector<std::optional<DensityFilter>> density_;
  mutable std::vector<AmFilter> am_;
  bool symX_ = false;
  bool extY_ = false;
};

/// Reduced design variables: one variable per orbit of Design voxels under the
/// requested x-mirror / y-extrusion maps. expand writes the variable to every
/// orbit member (and imposes passives); reduce_grad sums the adjoint.
class DesignSpace {
 public:
  DesignSpace(const RegionMask& mask, bool symmetryX, bool extrusionY);

  std::int64_t size() const { return std::int64_t(orbits_.size()); }
  std::int64_t designVoxelCount() const { return nDesign_; }

  Eigen::VectorXd uniform(double v) const;
  FieldD expand(const Eigen::VectorXd& x) const;
  Eigen::VectorXd reduce_grad(const FieldD& gradFull) const;

  const std::vector<std::vector<std::int64_t>>& orbits() const { return orbits_; }

 private:
  RegionMask mask_;
  std::vector<std::vector<std::int64_t>> orbits_;
  std::int64_t nDesign_ = 0;
};

}  // namespace pato
