#include "pato/filters.hpp"

#include <cmath>
#include <map>
#include <stdexcept>
#include <tuple>

namespace pato {

namespace {

void check_unit_range(const FieldD& f, const char* what) {
  if (f.values.minCoeff() < -1e-12 || f.values.maxCoeff() > 1.0 + 1e-12)
    throw std::invalid_argument(std::string(what) + ": densities must lie in [0,1]");
}

}  // namespace

DensityFilter::DensityFilter(const GridDims& dims, double radius) : dims_(dims), radius_(radius) {
  validate_dims(dims);
  if (!(radius >= dims.h)) throw std::invalid_argument("density filter radius must be >= voxel size");
  const int reach = int(std::ceil(radius / dims.h)) - 1;
  for (int dz = -reach; dz <= reach; ++dz)
    for (int dy = -reach; dy <= reach; ++dy)
      for (int dx = -reach; dx <= reach; ++dx) {
        const double dist = dims.h * std::sqrt(double(dx * dx + dy * dy + dz * dz));
        if (dist < radius) taps_.push_back({dx, dy, dz, radius - dist});
      }
  norm_ = ArrayX<double>::Zero(dims.cellCount());
  for (int k = 0; k < dims.nz; ++k)
    for (int j = 0; j < dims.ny; ++j)
      for (int i = 0; i < dims.nx; ++i) {
        double d = 0.0;
        for (const Tap& t : taps_) {
          const int a = i + t.dx, b = j + t.dy, c = k + t.dz;
          if (a >= 0 && a < dims.nx && b >= 0 && b < dims.ny && c >= 0 && c < dims.nz) d += t.w;
        }
        norm_[dims.cell(i, j, k)] = d;
      }
}

FieldD DensityFilter::forward(const FieldD& rho) const {
  if (!(rho.dims == dims_)) throw std::invalid_argument("density filter: dims mismatch");
  FieldD out = make_field<double>(dims_);
  for (int k = 0; k < dims_.nz; ++k)
    for (int j = 0; j < dims_.ny; ++j)
      for (int i = 0; i < dims_.nx; ++i) {
        double acc = 0.0;
        for (const Tap& t : taps_) {
          const int a = i + t.dx, b = j + t.dy, c = k + t.dz;
          if (a >= 0 && a < dims_.nx && b >= 0 && b < dims_.ny && c >= 0 && c < dims_.nz)
            acc += t.w * rho.at(a, b, c);
        }
        out.at(i, j, k) = acc / norm_[dims_.cell(i, j, k)];
      }
  return out;
}

FieldD DensityFilter::backward(const FieldD& grad) const {
  if (!(grad.dims == dims_)) throw std::invalid_argument("density filter: dims mismatch");
  // transpose of forward: scale by the receiving voxel's norm, then convolve
  FieldD scaled = make_field<double>(dims_);
  scaled.values = grad.values / norm_;
  FieldD out = make_field<double>(dims_);
  for (int k = 0; k < dims_.nz; ++k)
    for (int j = 0; j < dims_.ny; ++j)
      for (int i = 0; i < dims_.nx; ++i) {
        double acc = 0.0;
        for (const Tap& t : taps_) {
          // mirrored tap: contributions of voxel (i,j,k) to out voxel (i+dx,...)
          const int a = i + t.dx, b = j + t.dy, c = k + t.dz;
          if (a >= 0 && a < dims_.nx && b >= 0 && b < dims_.ny && c >= 0 && c < dims_.nz)
            acc += t.w * scaled.at(a, b, c);
        }
        out.at(i, j, k) = acc;
      }
  return out;
}

namespace {

inline double smooth_min(double a, double b, double eps, double* da = nullptr, double* db = nullptr) {
  const double d = a - b;
  const double r = std::sqrt(d * d + eps);
  if (da) *da = 0.5 * (1.0 - d / r);
  if (db) *db = 0.5 * (1.0 + d / r);
  return 0.5 * (a + b - r + std::sqrt(eps));
}

}  // namespace

AmFilter::AmFilter(const GridDims& dims, AmFilterParams params) : dims_(dims), prm_(params) {
  validate_dims(dims);
  if (!(prm_.P >= 4.0)) throw std::invalid_argument("overhang filter: smooth-max exponent must be >= 4");
  if (!(prm_.eps > 0.0)) throw std::invalid_argument("overhang filter: eps must be > 0");
}

FieldD AmFilter::forward(const FieldD& blueprint) {
  if (!(blueprint.dims == dims_)) throw std::invalid_argument("overhang filter: dims mismatch");
  check_unit_range(blueprint, "overhang filter");
  blueprint_ = blueprint;
  printed_ = make_field<double>(dims_);
  support_ = make_field<double>(dims_);
  const int nx = dims_.nx, ny = dims_.ny, nz = dims_.nz;
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) printed_.at(i, j, 0) = blueprint.at(i, j, 0);
  for (int k = 1; k < nz; ++k)
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < nx; ++i) {
        double sum = 0.0;
        auto tap = [&](int a, int b) {
          if (a >= 0 && a < nx && b >= 0 && b < ny)
            sum += std::pow(std::max(0.0, printed_.at(a, b, k - 1)), prm_.P);
        };
        tap(i, j);
        tap(i - 1, j);
        tap(i + 1, j);
        tap(i, j - 1);
        tap(i, j + 1);
        const double S = sum > 0.0 ? std::pow(sum, 1.0 / prm_.P) : 0.0;
        support_.at(i, j, k) = S;
        printed_.at(i, j, k) = smooth_min(blueprint.at(i, j, k), S, prm_.eps);
      }
  haveForward_ = true;
  return printed_;
}

FieldD AmFilter::backward(const FieldD& grad) const {
  if (!haveForward_) throw std::logic_error("overhang filter: backward before forward");
  if (!(grad.dims == dims_)) throw std::invalid_argument("overhang filter: dims mismatch");
  const int nx = dims_.nx, ny = dims_.ny, nz = dims_.nz;
  FieldD dPrinted = grad;  // accumulated d(output)/d(printed layer values)
  FieldD dBlueprint = make_field<double>(dims_);
  for (int k = nz - 1; k >= 1; --k)
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < nx; ++i) {
        const double g = dPrinted.at(i, j, k);
        if (g == 0.0) continue;
        double da, db;
        smooth_min(blueprint_.at(i, j, k), support_.at(i, j, k), prm_.eps, &da, &db);
        dBlueprint.at(i, j, k) += g * da;
        const double S = support_.at(i, j, k);
        if (S <= 0.0) continue;
        const double gS = g * db;
        auto tap = [&](int a, int b) {
          if (a >= 0 && a < nx && b >= 0 && b < ny) {
            const double v = std::max(0.0, printed_.at(a, b, k - 1));
            dPrinted.at(a, b, k - 1) += gS * std::pow(v / S, prm_.P - 1.0);
          }
        };
        tap(i, j);
        tap(i - 1, j);
        tap(i + 1, j);
        tap(i, j - 1);
        tap(i, j + 1);
      }
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) dBlueprint.at(i, j, 0) += dPrinted.at(i, j, 0);
  return dBlueprint;
}

FieldD symmetry_project_x(const FieldD& f) {
  FieldD out = make_field<double>(f.dims);
  const int nx = f.dims.nx;
  for (int k = 0; k < f.dims.nz; ++k)
    for (int j = 0; j < f.dims.ny; ++j)
      for (int i = 0; i < nx; ++i)
        out.at(i, j, k) = 0.5 * (f.at(i, j, k) + f.at(nx - 1 - i, j, k));
  return out;
}

FieldD extrusion_project_y(const FieldD& f) {
  FieldD out = make_field<double>(f.dims);
  const int ny = f.dims.ny;
  for (int k = 0; k < f.dims.nz; ++k)
    for (int i = 0; i < f.dims.nx; ++i) {
      double mean = 0.0;
      for (int j = 0; j < ny; ++j) mean += f.at(i, j, k);
      mean /= double(ny);
      for (int j = 0; j < ny; ++j) out.at(i, j, k) = mean;
    }
  return out;
}

FilterChain::FilterChain(const RegionMask& mask, std::vector<FilterStageSpec> stages)
    : mask_(mask) {
  validate_dims(mask.dims);
  if (std::int64_t(mask.tags.size()) != mask.dims.cellCount())
    throw std::invalid_argument("filter chain: mask size mismatch");
  for (const FilterStageSpec& s : stages) {
    switch (s.type) {
      case FilterStage::SymmetryX:
        symX_ = true;
        break;
      case FilterStage::ExtrusionY:
        extY_ = true;
        break;
      case FilterStage::Density:
        specs_.push_back(s);
        density_.emplace_back(DensityFilter(mask.dims, s.radius));
        am_.emplace_back(mask.dims);  // placeholder slot, unused for this stage
        break;
      case FilterStage::AmOverhang:
        specs_.push_back(s);
        density_.emplace_back(std::nullopt);
        am_.emplace_back(mask.dims, s.am);
        break;
    }
  }
}

FieldD FilterChain::forward(const FieldD& raw) {
  if (!(raw.dims == mask_.dims)) throw std::invalid_argument("filter chain: dims mismatch");
  FieldD f = raw;
  for (size_t s = 0; s < specs_.size(); ++s) {
    if (specs_[s].type == FilterStage::Density)
      f = density_[s]->forward(f);
    else
      f = am_[s].forward(f);
  }
  for (std::int64_t v = 0; v < f.size(); ++v) {
    if (mask_.tags[size_t(v)] == VoxelTag::PassiveSolid)
      f.values[v] = 1.0;
    else if (mask_.tags[size_t(v)] == VoxelTag::PassiveVoid)
      f.values[v] = 0.0;
    else
      f.values[v] = std::min(1.0, std::max(0.0, f.values[v]));
  }
  return f;
}

FieldD FilterChain::backward(const FieldD& gradPhys) const {
  if (!(gradPhys.dims == mask_.dims)) throw std::invalid_argument("filter chain: dims mismatch");
  FieldD g = gradPhys;
  for (std::int64_t v = 0; v < g.size(); ++v)
    if (mask_.tags[size_t(v)] != VoxelTag::Design) g.values[v] = 0.0;
  for (size_t s = specs_.size(); s-- > 0;) {
    if (specs_[s].type == FilterStage::Density)
      g = density_[s]->backward(g);
    else
      g = am_[s].backward(g);
  }
  return g;
}

DesignSpace::DesignSpace(const RegionMask& mask, bool symmetryX, bool extrusionY) : mask_(mask) {
  validate_dims(mask.dims);
  const GridDims& d = mask.dims;
  // the requested maps must keep the region layout invariant
  for (int k = 0; k < d.nz; ++k)
    for (int j = 0; j < d.ny; ++j)
      for (int i = 0; i < d.nx; ++i) {
        const VoxelTag t = mask.at(i, j, k);
        if (symmetryX && mask.at(d.nx - 1 - i, j, k) != t)
          throw std::invalid_argument("design space: mask not x-mirror symmetric");
        if (extrusionY && mask.at(i, 0, k) != t)
          throw std::invalid_argument("design space: mask not y-extrudable");
      }
  std::map<std::tuple<int, int, int>, std::int64_t> lut;
  for (int k = 0; k < d.nz; ++k)
    for (int j = 0; j < d.ny; ++j)
      for (int i = 0; i < d.nx; ++i) {
        if (mask.at(i, j, k) != VoxelTag::Design) continue;
        ++nDesign_;
        const int ic = symmetryX ? std::min(i, d.nx - 1 - i) : i;
        const int jc = extrusionY ? 0 : j;
        const auto key = std::make_tuple(ic, jc, k);
        auto it = lut.find(key);
        if (it == lut.end()) {
          it = lut.emplace(key, std::int64_t(orbits_.size())).first;
          orbits_.emplace_back();
        }
        orbits_[size_t(it->second)].push_back(d.cell(i, j, k));
      }
  if (orbits_.empty()) throw std::invalid_argument("design space: mask has no Design voxels");
}

Eigen::VectorXd DesignSpace::uniform(double v) const {
  return Eigen::VectorXd::Constant(size(), v);
}

FieldD DesignSpace::expand(const Eigen::VectorXd& x) const {
  if (x.size() != size()) throw std::invalid_argument("design space: variable count mismatch");
  FieldD f = make_field<double>(mask_.dims);
  for (std::int64_t v = 0; v < f.size(); ++v) {
    if (mask_.tags[size_t(v)] == VoxelTag::PassiveSolid) f.values[v] = 1.0;
    // PassiveVoid stays 0
  }
  for (size_t o = 0; o < orbits_.size(); ++o)
    for (std::int64_t v : orbits_[o]) f.values[v] = x[std::int64_t(o)];
  return f;
}

Eigen::VectorXd DesignSpace::reduce_grad(const FieldD& gradFull) const {
  if (!(gradFull.dims == mask_.dims)) throw std::invalid_argument("design space: dims mismatch");
  Eigen::VectorXd g = Eigen::VectorXd::Zero(size());
  for (size_t o = 0; o < orbits_.size(); ++o) {
    double acc = 0.0;
    for (std::int64_t v : orbits_[o]) acc += gradFull.values[v];
    g[std::int64_t(o)] = acc;
  }
  return g;
}

}  // namespace pato
