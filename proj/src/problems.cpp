#include "pato/problems.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace pato {

namespace {

bool in_notch(const CouponSpec& c, const CouponLayout& L, int i, int k) {
  if (k > L.notchApex) return false;
  const double halfBase = 0.5 * c.notchWidth * c.dims.nx;
  const double taper = L.notchApex > 0 ? 1.0 - double(k) / double(L.notchApex) : 1.0;
  return std::abs(double(i) - L.cx) <= halfBase * taper;
}

bool in_design_window(const CouponSpec& c, const CouponLayout& L, int i, int k) {
  return i >= c.shell && i < c.dims.nx - c.shell && k >= L.designLo && k <= L.designHi;
}

bool in_diamond_channel(const CouponLayout& L, int i, int k) {
  return std::abs(double(i) - L.cx) + std::abs(double(k) - L.channelZ) <= double(L.channelR);
}

}  // namespace

CouponLayout coupon_layout(const CouponSpec& c) {
  validate_dims(c.dims);
  if (c.shell < 1) throw std::invalid_argument("coupon: shell must be >= 1 voxel");
  if (c.notchGap < 1) throw std::invalid_argument("coupon: notchGap must be >= 1 row");
  CouponLayout L;
  L.cx = 0.5 * double(c.dims.nx - 1);
  L.notchApex = std::max(1, int(std::lround(c.notchHeight * c.dims.nz)));
  L.designLo = L.notchApex + c.notchGap;
  L.designHi = c.dims.nz - 1 - c.shell;
  L.channelR = std::max(1, int(std::lround(c.channelRadius * c.dims.nx)));
  L.channelZ = double(L.designLo + L.channelR + 1);
  if (c.dims.nx - 2 * c.shell < 2 || L.designLo >= L.designHi)
    throw std::invalid_argument("coupon: design window is empty");
  return L;
}

RegionMask coupon_mask(const CouponSpec& c) {
  const CouponLayout L = coupon_layout(c);
  RegionMask m = uniform_mask(c.dims, VoxelTag::PassiveSolid);
  for (int k = 0; k < c.dims.nz; ++k)
    for (int j = 0; j < c.dims.ny; ++j)
      for (int i = 0; i < c.dims.nx; ++i) {
        VoxelTag t = VoxelTag::PassiveSolid;
        if (in_notch(c, L, i, k)) t = VoxelTag::PassiveVoid;
        else if (in_design_window(c, L, i, k)) t = VoxelTag::Design;
        m.tags[size_t(c.dims.cell(i, j, k))] = t;
      }
  return m;
}

RegionMask coupon_mask_with_channel(const CouponSpec& c) {
  const CouponLayout L = coupon_layout(c);
  if (L.channelZ + L.channelR > L.designHi)
    throw std::invalid_argument("coupon: precut channel does not fit the design window");
  RegionMask m = coupon_mask(c);
  for (int k = 0; k < c.dims.nz; ++k)
    for (int j = 0; j < c.dims.ny; ++j)
      for (int i = 0; i < c.dims.nx; ++i)
        if (in_diamond_channel(L, i, k)) m.tags[size_t(c.dims.cell(i, j, k))] = VoxelTag::PassiveVoid;
  return m;
}

std::vector<std::uint8_t> channel_voxels(const CouponSpec& c) {
  const CouponLayout L = coupon_layout(c);
  std::vector<std::uint8_t> f(size_t(c.dims.cellCount()), 0);
  for (int k = 0; k < c.dims.nz; ++k)
    for (int j = 0; j < c.dims.ny; ++j)
      for (int i = 0; i < c.dims.nx; ++i)
        if (in_diamond_channel(L, i, k)) f[size_t(c.dims.cell(i, j, k))] = 1;
  return f;
}

FieldD nogo_density(const CouponSpec& c) {
  const CouponLayout L = coupon_layout(c);
  if (L.channelZ + L.channelR > L.designHi)
    throw std::invalid_argument("coupon: baseline channel does not fit the design window");
  FieldD rho = make_field<double>(c.dims, 1.0);
  const double r2 = double(L.channelR) * double(L.channelR);
  for (int k = 0; k < c.dims.nz; ++k)
    for (int j = 0; j < c.dims.ny; ++j)
      for (int i = 0; i < c.dims.nx; ++i) {
        const double dx = double(i) - L.cx, dz = double(k) - L.channelZ;
        if (in_notch(c, L, i, k) || dx * dx + dz * dz <= r2) rho.at(i, j, k) = 0.0;
      }
  return rho;
}

std::vector<std::uint8_t> crack_region(const CouponSpec& c) {
  const CouponLayout L = coupon_layout(c);
  std::vector<std::uint8_t> f(size_t(c.dims.cellCount()), 0);
  const int kLo = std::max(0, L.notchApex - 1);
  const int kHi = int(L.channelZ) - L.channelR + 2;  // channel bottom plus a margin
  for (int k = kLo; k <= std::min(kHi, c.dims.nz - 1); ++k)
    for (int j = 0; j < c.dims.ny; ++j)
      for (int i = 0; i < c.dims.nx; ++i)
        if (std::abs(double(i) - L.cx) <= double(L.channelR) + 1.0)
          f[size_t(c.dims.cell(i, j, k))] = 1;
  return f;
}

std::string problem_family_name(ProblemFamily f) {
  switch (f) {
    case ProblemFamily::SymmetricThermal: return "sym_thermal";
    case ProblemFamily::AsymmetricThermal: return "asym_thermal";
    case ProblemFamily::HydrostaticPressure: return "hydrostatic";
    case ProblemFamily::SegmentLoaded: return "segment";
  }
  throw std::invalid_argument("unknown problem family");
}

Eigen::VectorXd channel_surface_load(const CouponSpec& c, const double mags[4]) {
  const CouponLayout L = coupon_layout(c);
  const GridDims& d = c.dims;
  const std::vector<std::uint8_t> ch = channel_voxels(c);
  Eigen::VectorXd f = Eigen::VectorXd::Zero(3 * d.nodeCount());
  const int off[6][3] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
  for (int k = 0; k < d.nz; ++k)
    for (int j = 0; j < d.ny; ++j)
      for (int i = 0; i < d.nx; ++i) {
        if (!ch[size_t(d.cell(i, j, k))]) continue;
        const int quad = (double(i) > L.cx ? 1 : 0) + (double(k) > L.channelZ ? 2 : 0);
        const double m = mags[quad] * d.h * d.h / 4.0;
        for (const auto& o : off) {
          const int ni = i + o[0], nj = j + o[1], nk = k + o[2];
          if (ni < 0 || ni >= d.nx || nj < 0 || nj >= d.ny || nk < 0 || nk >= d.nz) continue;
          if (ch[size_t(d.cell(ni, nj, nk))]) continue;
          // Face between void and material: spread the pressure resultant
          // over the four shared nodes, pointing into the material.
          const int bi = i + (o[0] > 0 ? 1 : 0), bj = j + (o[1] > 0 ? 1 : 0),
                    bk = k + (o[2] > 0 ? 1 : 0);
          for (int b = 0; b < 2; ++b)
            for (int a = 0; a < 2; ++a) {
              int ii = bi, jj = bj, kk = bk;
              if (o[0] != 0) { jj += a; kk += b; }
              else if (o[1] != 0) { ii += a; kk += b; }
              else { ii += a; jj += b; }
              for (int comp = 0; comp < 3; ++comp)
                f[3 * d.node(ii, jj, kk) + comp] += m * double(o[comp]);
            }
        }
      }
  return f;
}

TOProblem make_problem(ProblemFamily fam, const CouponSpec& c, double vtarget, unsigned seed) {
  const GridDims& d = c.dims;
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);

  TOProblem p;
  p.Vtarget = vtarget;
  p.stages.clear();
  if (fam == ProblemFamily::SymmetricThermal) p.stages.push_back({FilterStage::SymmetryX});
  p.stages.push_back({FilterStage::ExtrusionY});
  p.stages.push_back({FilterStage::Density, 1.6 * d.h});
  p.stages.push_back({FilterStage::AmOverhang});

  const bool thermal =
      fam == ProblemFamily::SymmetricThermal || fam == ProblemFamily::AsymmetricThermal;
  if (thermal) {
    p.physics = Physics::ThermalCompliance;
    p.mask = coupon_mask(c);
    p.load = Eigen::VectorXd::Zero(d.nodeCount());
    // Heat everywhere with a seed-drawn ramp; the symmetric family ramps only
    // along z so the input stays x-mirror symmetric.
    const double az = -0.5 + u01(rng);
    const double ax = fam == ProblemFamily::AsymmetricThermal
                          ? (u01(rng) < 0.5 ? -1.0 : 1.0) * (0.4 + 0.5 * u01(rng))
                          : 0.0;
    for (int k = 0; k <= d.nz; ++k)
      for (int j = 0; j <= d.ny; ++j)
        for (int i = 0; i <= d.nx; ++i)
          p.load[d.node(i, j, k)] = 1.0 + az * (double(k) / d.nz - 0.5) +
                                    ax * (2.0 * double(i) / d.nx - 1.0) * 0.5;
    for (int j = 0; j <= d.ny; ++j)
      for (int i = 0; i <= d.nx; ++i) p.constrained.push_back(d.node(i, j, 0));
  } else {
    p.physics = Physics::ElasticCompliance;
    p.mask = coupon_mask_with_channel(c);
    double mags[4];
    if (fam == ProblemFamily::HydrostaticPressure) {
      const double m = 1.0 + 0.5 * u01(rng);
      mags[0] = mags[1] = mags[2] = mags[3] = m;
    } else {
      for (double& m : mags) m = 0.25 + u01(rng);
    }
    p.load = channel_surface_load(c, mags);
    for (int j = 0; j <= d.ny; ++j)
      for (int i = 0; i <= d.nx; ++i)
        for (int comp = 0; comp < 3; ++comp)
          p.constrained.push_back(3 * d.node(i, j, 0) + comp);
  }
  return p;
}

}  // namespace pato
