#pragma once

#include "pato/grid.hpp"
#include "pato/optimizer.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace pato {

/// Test-coupon family used throughout: a rectangular block built on the
/// plate, a triangular notch cut into the bottom face (extruded along y),
/// and an interior design window where a through-channel may form. The
/// outer shell on the x and z faces stays solid; the notch stays void.
/// All features are constant along y, so the mask is y-extrudable, and
/// symmetric about the x midplane.
struct CouponSpec {
  GridDims dims{24, 12, 32, 1.0};
  int shell = 2;               // solid border on x and z faces, voxels
  double notchWidth = 0.25;    // triangle base, fraction of nx
  double notchHeight = 0.20;   // apex height above the bottom, fraction of nz
  int notchGap = 2;            // solid rows between apex and design window
  double channelRadius = 0.17; // precut/baseline channel size, fraction of nx
};

/// Index-space geometry derived from a CouponSpec; one authority for all
/// placement questions (builders, crack region, tests).
struct CouponLayout {
  double cx = 0.0;      // x symmetry plane, voxel centers
  int notchApex = 0;    // highest voxel row the notch reaches
  int designLo = 0;     // first design-window row
  int designHi = 0;     // last design-window row
  int channelR = 0;     // channel "radius" in voxels
  double channelZ = 0;  // channel center row
};
CouponLayout coupon_layout(const CouponSpec& c);

/// Design window + solid shell + void notch. No channel: the optimizer is
/// free to carve one.
RegionMask coupon_mask(const CouponSpec& c);

/// Same, with a diamond-section channel (45 degree faces, self-supporting)
/// precut as PassiveVoid inside the design window.
RegionMask coupon_mask_with_channel(const CouponSpec& c);

/// Per-voxel flag for the precut diamond channel (subset of the mask's
/// PassiveVoid; the notch is not included).
std::vector<std::uint8_t> channel_voxels(const CouponSpec& c);

/// The baseline coupon that cracks: solid block, notch void, and a circular
/// channel whose flat crown is not self-supporting. Density on coupon_mask
/// dims, values 0/1.
FieldD nogo_density(const CouponSpec& c);

/// Band covering the channel bottom and the ligament down to the notch apex,
/// where the baseline coupon is known to fail. Per-voxel flag.
std::vector<std::uint8_t> crack_region(const CouponSpec& c);

enum class ProblemFamily {
  SymmetricThermal,   // x-symmetric conduction, sink at the plate
  AsymmetricThermal,  // side-weighted heat input, no symmetry stage
  HydrostaticPressure,// uniform pressure on the precut channel surface
  SegmentLoaded       // four independent segment pressures on that surface
};
std::string problem_family_name(ProblemFamily f);

/// Assembles the full compliance problem for one (family, Vtarget, seed)
/// cell: coupon mask, filter stack (extrusion in y, density smoothing,
/// overhang control, plus x symmetry for the symmetric family), loads drawn
/// deterministically from the seed, plate fixity where elastic.
TOProblem make_problem(ProblemFamily f, const CouponSpec& c, double vtarget, unsigned seed);

/// Pressure loads on the precut channel walls, one magnitude per quadrant of
/// the channel cross-section (split by its vertical and horizontal center
/// planes). Forces point from the void into the material.
Eigen::VectorXd channel_surface_load(const CouponSpec& c, const double mags[4]);

}  // namespace pato
