#pragma once

#include "pato/grid.hpp"

#include <string>
#include <utility>
#include <vector>

namespace pato {

/// Legacy-ASCII structured-points writer, one SCALARS block per named field.
/// All fields must share dims. Values are printed with 17 significant digits.
/// Throws on non-finite values.
void write_vtk(const std::string& path,
               const std::vector<std::pair<std::string, const FieldD*>>& fields);

inline void write_vtk(const std::string& path, const std::string& name, const FieldD& f) {
  write_vtk(path, {{name, &f}});
}

/// Raw little-endian binary field: header u32 nx, u32 ny, u32 nz, f64 h,
/// then nx*ny*nz f64 values in storage order (x fastest). Bit-exact round trip.
void write_raw(const std::string& path, const FieldD& f);
FieldD read_raw(const std::string& path);

}  // namespace pato
