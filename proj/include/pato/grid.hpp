#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace pato {

template <class Scalar>
using ArrayX = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

/// Uniform grid of cubic voxels, edge length h in mm. Fields are collocated
/// at voxel centers; voxel (i,j,k) has its center at ((i+0.5)h, (j+0.5)h, (k+0.5)h).
/// Linear storage is x-fastest: index = i + nx*(j + ny*k).
struct GridDims {
  int nx = 0;
  int ny = 0;
  int nz = 0;
  double h = 1.0;

  std::int64_t cellCount() const { return std::int64_t(nx) * ny * nz; }
  std::int64_t nodeCount() const { return std::int64_t(nx + 1) * (ny + 1) * (nz + 1); }

  std::int64_t cell(int i, int j, int k) const {
    return i + std::int64_t(nx) * (j + std::int64_t(ny) * k);
  }
  std::int64_t node(int i, int j, int k) const {
    return i + std::int64_t(nx + 1) * (j + std::int64_t(ny + 1) * k);
  }

  bool operator==(const GridDims& o) const {
    return nx == o.nx && ny == o.ny && nz == o.nz && h == o.h;
  }
};

inline void validate_dims(const GridDims& d) {
  if (d.nx < 1 || d.ny < 1 || d.nz < 1) throw std::invalid_argument("grid dims must be >= 1 per axis");
  if (!(d.h > 0.0)) throw std::invalid_argument("grid spacing h must be > 0");
}

enum class VoxelTag : std::uint8_t { Design = 0, PassiveSolid = 1, PassiveVoid = 2 };

/// Per-voxel region tags; same storage order as fields.
struct RegionMask {
  GridDims dims;
  std::vector<VoxelTag> tags;

  VoxelTag at(int i, int j, int k) const { return tags[size_t(dims.cell(i, j, k))]; }
  std::int64_t count(VoxelTag t) const {
    std::int64_t n = 0;
    for (VoxelTag v : tags)
      if (v == t) ++n;
    return n;
  }
};

inline RegionMask uniform_mask(const GridDims& d, VoxelTag t = VoxelTag::Design) {
  validate_dims(d);
  return RegionMask{d, std::vector<VoxelTag>(size_t(d.cellCount()), t)};
}

/// Scalar field on a voxel grid.
template <class Scalar>
struct Field3 {
  GridDims dims;
  ArrayX<Scalar> values;

  Scalar& at(int i, int j, int k) { return values[dims.cell(i, j, k)]; }
  Scalar at(int i, int j, int k) const { return values[dims.cell(i, j, k)]; }
  std::int64_t size() const { return values.size(); }
};

using FieldD = Field3<double>;

template <class Scalar>
Field3<Scalar> make_field(const GridDims& d, Scalar init = Scalar(0)) {
  validate_dims(d);
  Field3<Scalar> f{d, ArrayX<Scalar>::Constant(d.cellCount(), init)};
  return f;
}

/// Creates a density field honoring the mask: Design voxels get `init`,
/// PassiveSolid 1, PassiveVoid 0. `init` must lie in [0,1].
template <class Scalar>
Field3<Scalar> make_density(const RegionMask& mask, Scalar init) {
  if (init < Scalar(0) || init > Scalar(1)) throw std::invalid_argument("initial density must lie in [0,1]");
  Field3<Scalar> f = make_field<Scalar>(mask.dims, init);
  for (std::int64_t v = 0; v < f.size(); ++v) {
    if (mask.tags[size_t(v)] == VoxelTag::PassiveSolid) f.values[v] = Scalar(1);
    if (mask.tags[size_t(v)] == VoxelTag::PassiveVoid) f.values[v] = Scalar(0);
  }
  return f;
}

/// Symmetric second-order tensor field, tensor components (not engineering shear),
/// column order xx, yy, zz, xy, yz, xz.
enum SymComp : int { CXX = 0, CYY = 1, CZZ = 2, CXY = 3, CYZ = 4, CXZ = 5 };

template <class Scalar>
struct SymTensorField3 {
  GridDims dims;
  Eigen::Array<Scalar, Eigen::Dynamic, 6> comp;

  Eigen::Matrix<Scalar, 3, 3> matrixAt(std::int64_t v) const {
    Eigen::Matrix<Scalar, 3, 3> m;
    m << comp(v, CXX), comp(v, CXY), comp(v, CXZ),
         comp(v, CXY), comp(v, CYY), comp(v, CYZ),
         comp(v, CXZ), comp(v, CYZ), comp(v, CZZ);
    return m;
  }
};

using SymTensorFieldD = SymTensorField3<double>;

template <class Scalar>
SymTensorField3<Scalar> make_tensor_field(const GridDims& d) {
  validate_dims(d);
  SymTensorField3<Scalar> f;
  f.dims = d;
  f.comp = Eigen::Array<Scalar, Eigen::Dynamic, 6>::Zero(d.cellCount(), 6);
  return f;
}

namespace detail {

// Maps a destination cell-center to source index space; clamps to the boundary
// centers so samples outside the center lattice take the nearest center value.
struct AxisBlend {
  int i0;
  int i1;
  double t;
};

inline AxisBlend axis_blend(double s, int n) {
  if (n == 1 || s <= 0.0) return {0, 0, 0.0};
  if (s >= double(n - 1)) return {n - 1, n - 1, 0.0};
  int i0 = int(std::floor(s));
  if (i0 > n - 2) i0 = n - 2;
  return {i0, i0 + 1, s - double(i0)};
}

inline double src_coord(int dstIdx, int nDst, int nSrc) {
  return (double(dstIdx) + 0.5) * double(nSrc) / double(nDst) - 0.5;
}

}  // namespace detail

/// Trilinear sample at a point given in source index space (voxel units,
/// center of voxel i at coordinate i). Clamped at the boundary band.
template <class Scalar>
Scalar trilinear_sample(const Field3<Scalar>& f, double x, double y, double z) {
  const auto bx = detail::axis_blend(x, f.dims.nx);
  const auto by = detail::axis_blend(y, f.dims.ny);
  const auto bz = detail::axis_blend(z, f.dims.nz);
  Scalar acc = Scalar(0);
  const double wx[2] = {1.0 - bx.t, bx.t};
  const double wy[2] = {1.0 - by.t, by.t};
  const double wz[2] = {1.0 - bz.t, bz.t};
  const int ix[2] = {bx.i0, bx.i1};
  const int iy[2] = {by.i0, by.i1};
  const int iz[2] = {bz.i0, bz.i1};
  for (int c = 0; c < 2; ++c)
    for (int b = 0; b < 2; ++b)
      for (int a = 0; a < 2; ++a) {
        const double w = wx[a] * wy[b] * wz[c];
        if (w != 0.0) acc += Scalar(w) * f.at(ix[a], iy[b], iz[c]);
      }
  return acc;
}

/// Resamples onto a new grid, extent-preserving in index space per axis.
/// Equal dims per axis reproduce values bit-identically.
template <class Scalar>
Field3<Scalar> trilinear_resample(const Field3<Scalar>& src, const GridDims& dst) {
  validate_dims(dst);
  Field3<Scalar> out = make_field<Scalar>(dst);
  for (int k = 0; k < dst.nz; ++k) {
    const double sz = detail::src_coord(k, dst.nz, src.dims.nz);
    for (int j = 0; j < dst.ny; ++j) {
      const double sy = detail::src_coord(j, dst.ny, src.dims.ny);
      for (int i = 0; i < dst.nx; ++i) {
        const double sx = detail::src_coord(i, dst.nx, src.dims.nx);
        out.at(i, j, k) = trilinear_sample(src, sx, sy, sz);
      }
    }
  }
  return out;
}

/// Adjoint of trilinear_resample: scatters a gradient living on `dst` back to
/// a source-shaped accumulator with the transposed interpolation weights.
template <class Scalar>
Field3<Scalar> trilinear_resample_adjoint(const Field3<Scalar>& dstGrad, const GridDims& srcDims) {
  validate_dims(srcDims);
  Field3<Scalar> out = make_field<Scalar>(srcDims);
  const GridDims& dst = dstGrad.dims;
  for (int k = 0; k < dst.nz; ++k) {
    const auto bz = detail::axis_blend(detail::src_coord(k, dst.nz, srcDims.nz), srcDims.nz);
    for (int j = 0; j < dst.ny; ++j) {
      const auto by = detail::axis_blend(detail::src_coord(j, dst.ny, srcDims.ny), srcDims.ny);
      for (int i = 0; i < dst.nx; ++i) {
        const auto bx = detail::axis_blend(detail::src_coord(i, dst.nx, srcDims.nx), srcDims.nx);
        const Scalar g = dstGrad.at(i, j, k);
        const double wx[2] = {1.0 - bx.t, bx.t};
        const double wy[2] = {1.0 - by.t, by.t};
        const double wz[2] = {1.0 - bz.t, bz.t};
        const int ix[2] = {bx.i0, bx.i1};
        const int iy[2] = {by.i0, by.i1};
        const int iz[2] = {bz.i0, bz.i1};
        for (int c = 0; c < 2; ++c)
          for (int b = 0; b < 2; ++b)
            for (int a = 0; a < 2; ++a) {
              const double w = wx[a] * wy[b] * wz[c];
              if (w != 0.0) out.at(ix[a], iy[b], iz[c]) += Scalar(w) * g;
            }
      }
    }
  }
  return out;
}

/// Box-overlap volume averaging onto a coarser (or equal) grid. Exact for any
/// integer or fractional ratio; weights are the per-axis interval overlaps.
template <class Scalar>
Field3<Scalar> downsample_volume_average(const Field3<Scalar>& src, const GridDims& dst) {
  validate_dims(dst);
  struct Span {
    int first;
    std::vector<double> w;
  };
  auto axis_spans = [](int nDst, int nSrc) {
    std::vector<Span> spans(nDst);
    const double r = double(nSrc) / double(nDst);
    for (int a = 0; a < nDst; ++a) {
      const double lo = a * r, hi = (a + 1) * r;
      int j0 = int(std::floor(lo));
      int j1 = std::min(nSrc - 1, int(std::ceil(hi)) - 1);
      Span s;
      s.first = j0;
      for (int j = j0; j <= j1; ++j) {
        const double ov = std::min(hi, double(j + 1)) - std::max(lo, double(j));
        s.w.push_back(std::max(0.0, ov) / r);
      }
      spans[a] = s;
    }
    return spans;
  };
  const auto sx = axis_spans(dst.nx, src.dims.nx);
  const auto sy = axis_spans(dst.ny, src.dims.ny);
  const auto sz = axis_spans(dst.nz, src.dims.nz);
  Field3<Scalar> out = make_field<Scalar>(dst);
  for (int k = 0; k < dst.nz; ++k)
    for (int j = 0; j < dst.ny; ++j)
      for (int i = 0; i < dst.nx; ++i) {
        Scalar acc = Scalar(0);
        for (size_t c = 0; c < sz[k].w.size(); ++c)
          for (size_t b = 0; b < sy[j].w.size(); ++b)
            for (size_t a = 0; a < sx[i].w.size(); ++a) {
              const double w = sx[i].w[a] * sy[j].w[b] * sz[k].w[c];
              acc += Scalar(w) * src.at(sx[i].first + int(a), sy[j].first + int(b), sz[k].first + int(c));
            }
        out.at(i, j, k) = acc;
      }
  return out;
}

/// Central slice normal to y at j = floor(ny/2); element (i,k) = field(i, jmid, k).
template <class Scalar>
Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic> central_xz_slice(const Field3<Scalar>& f) {
  const int j = f.dims.ny / 2;
  Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic> s(f.dims.nx, f.dims.nz);
  for (int k = 0; k < f.dims.nz; ++k)
    for (int i = 0; i < f.dims.nx; ++i) s(i, k) = f.at(i, j, k);
  return s;
}

using BitSlice = Eigen::Array<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>;

template <class Scalar>
BitSlice binarize(const Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic>& slice, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) throw std::invalid_argument("binarize threshold must lie in (0,1)");
  return (slice >= Scalar(threshold)).template cast<std::uint8_t>();
}

/// 180-degree rotation about the z axis: (i,j,k) -> (nx-1-i, ny-1-j, k).
template <class Scalar>
Field3<Scalar> rotate180_z(const Field3<Scalar>& f) {
  Field3<Scalar> out = make_field<Scalar>(f.dims);
  for (int k = 0; k < f.dims.nz; ++k)
    for (int j = 0; j < f.dims.ny; ++j)
      for (int i = 0; i < f.dims.nx; ++i)
        out.at(f.dims.nx - 1 - i, f.dims.ny - 1 - j, k) = f.at(i, j, k);
  return out;
}

}  // namespace pato
