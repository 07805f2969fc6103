#include "pato/io.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <stdexcept>

static_assert(std::endian::native == std::endian::little, "raw field format assumes a little-endian host");

namespace pato {

namespace {

void require_finite(const FieldD& f, const std::string& what) {
  if (!f.values.isFinite().all()) throw std::invalid_argument(what + ": field contains non-finite values");
}

}  // namespace

void write_vtk(const std::string& path,
               const std::vector<std::pair<std::string, const FieldD*>>& fields) {
  if (fields.empty()) throw std::invalid_argument("write_vtk: no fields");
  const GridDims dims = fields.front().second->dims;
  for (const auto& [name, f] : fields) {
    if (!(f->dims == dims)) throw std::invalid_argument("write_vtk: field dims mismatch");
    require_finite(*f, "write_vtk[" + name + "]");
  }
  std::FILE* fp = std::fopen(path.c_str(), "w");
  if (!fp) throw std::runtime_error("write_vtk: cannot open " + path);
  std::fprintf(fp, "# vtk DataFile Version 3.0\n");
  std::fprintf(fp, "voxel fields\n");
  std::fprintf(fp, "ASCII\n");
  std::fprintf(fp, "DATASET STRUCTURED_POINTS\n");
  std::fprintf(fp, "DIMENSIONS %d %d %d\n", dims.nx, dims.ny, dims.nz);
  std::fprintf(fp, "ORIGIN 0 0 0\n");
  std::fprintf(fp, "SPACING %.17g %.17g %.17g\n", dims.h, dims.h, dims.h);
  std::fprintf(fp, "POINT_DATA %lld\n", static_cast<long long>(dims.cellCount()));
  for (const auto& [name, f] : fields) {
    std::fprintf(fp, "SCALARS %s double 1\n", name.c_str());
    std::fprintf(fp, "LOOKUP_TABLE default\n");
    for (std::int64_t v = 0; v < f->size(); ++v) std::fprintf(fp, "%.17g\n", f->values[v]);
  }
  std::fclose(fp);
}

void write_raw(const std::string& path, const FieldD& f) {
  require_finite(f, "write_raw");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_raw: cannot open " + path);
  const std::uint32_t d[3] = {std::uint32_t(f.dims.nx), std::uint32_t(f.dims.ny), std::uint32_t(f.dims.nz)};
  out.write(reinterpret_cast<const char*>(d), sizeof d);
  out.write(reinterpret_cast<const char*>(&f.dims.h), sizeof(double));
  out.write(reinterpret_cast<const char*>(f.values.data()), std::streamsize(f.size() * sizeof(double)));
  if (!out) throw std::runtime_error("write_raw: short write to " + path);
}

FieldD read_raw(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_raw: cannot open " + path);
  std::uint32_t d[3];
  double h = 0.0;
  in.read(reinterpret_cast<char*>(d), sizeof d);
  in.read(reinterpret_cast<char*>(&h), sizeof h);
  if (!in) throw std::runtime_error("read_raw: truncated header in " + path);
  GridDims dims{int(d[0]), int(d[1]), int(d[2]), h};
  validate_dims(dims);
  FieldD f = make_field<double>(dims);
  in.read(reinterpret_cast<char*>(f.values.data()), std::streamsize(f.size() * sizeof(double)));
  if (!in) throw std::runtime_error("read_raw: truncated payload in " + path);
  return f;
}

}  // namespace pato
