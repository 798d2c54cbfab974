/// @file qsf_io.hpp
/// @brief On-disk formats: binary field snapshots (QSF1), binary latitude
///        profiles (QSP1), CSV tables, and atomic text writes.
///
/// All binary payloads are little-endian; headers carry the grid dimensions
/// so readers can validate before allocating.  Every writer goes through a
/// temp-file-then-rename step so a crash never leaves a truncated file at
/// the target path, and identical inputs always produce byte-identical
/// files (numbers are printed with %.17g, which round-trips doubles).
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "qsphere/sphere.hpp"

namespace qsphere {

// ---------------------------------------------------------------------------
// QSF1: full scalar field on the transform grid
//   bytes 0..3   magic "QSF1"
//   bytes 4..7   uint32 nlat (LE)
//   bytes 8..11  uint32 nlon (LE)
//   then nlat*nlon float64 (LE), latitude-major
// ---------------------------------------------------------------------------

void save_field(const std::string& path, const Field& f);

/// Raw contents of a QSF1 file (no grid attached).
struct FieldFile {
    int nlat = 0;
    int nlon = 0;
    std::vector<double> values;
};
FieldFile read_field_file(const std::string& path);

/// Load a QSF1 file onto an existing grid; dimensions must match exactly.
Field load_field(const std::string& path, GridPtr grid);

// ---------------------------------------------------------------------------
// QSP1: latitude profile (one value per Gauss–Legendre node)
//   bytes 0..3   magic "QSP1"
//   bytes 4..7   uint32 nlat (LE)
//   then nlat float64 (LE), node order matching SphereGrid (north to south)
// ---------------------------------------------------------------------------

void save_profile(const std::string& path, const std::vector<double>& values);
std::vector<double> load_profile(const std::string& path);

// ---------------------------------------------------------------------------
// Text helpers
// ---------------------------------------------------------------------------

/// Shortest decimal that round-trips the double (%.17g via snprintf).
std::string format_double(double v);

/// CSV with a header row; every cell printed with format_double.
void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows);

/// Write a whole text file atomically (temp file + rename).
void write_text_atomic(const std::string& path, const std::string& content);

} // namespace qsphere
