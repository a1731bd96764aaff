#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "muasv/types.hpp"

namespace muasv {

// A cube on disk is a two-file pair: <base>.json carrying
//   {"rows":R,"cols":C,"bands":L,"dtype":"f32","interleave":"bip","byte_order":"le"}
// and <base>.raw holding R*C*L little-endian float32 values, pixel-major
// (all bands of pixel 0, then pixel 1, ..., pixels in row-major order).
// Paths may be given as the base, the .json file or the .raw file.
HsiCube read_cube(const std::filesystem::path& path);
void write_cube(const HsiCube& cube, const std::filesystem::path& path);

// Per-pixel endmember field, stored like a cube but with an extra
// "endmembers" header key. Payload order: per pixel, per endmember, the L
// band values (each pixel's L x P matrix laid out column by column).
struct FieldFile {
  EndmemberField field;
  Index rows = 0;
  Index cols = 0;
};
FieldFile read_field(const std::filesystem::path& path);
void write_field(const EndmemberField& field, Index rows, Index cols,
                 const std::filesystem::path& path);

// Plain CSV matrices: one row per line, '.' decimal separator, no header.
// Endmember sets are stored as L rows by P columns.
Matrix read_csv_matrix(const std::filesystem::path& path);
void write_csv_matrix(const Matrix& m, const std::filesystem::path& path);

EndmemberSet read_endmember_csv(const std::filesystem::path& path);

// Scaling factors as CSV with one row per pixel and one column per endmember.
void write_scaling_csv(const ScalingField& psi, const std::filesystem::path& path);
ScalingField read_scaling_csv(const std::filesystem::path& path);

// Superpixel label map as rows x cols integers.
void write_labels_csv(const std::vector<Index>& labels, Index rows, Index cols,
                      const std::filesystem::path& path);

// 8-bit binary PGM (P5, maxval 255); values are clamped to [0,1] and scaled.
void write_pgm(const Eigen::Ref<const Vector>& values, Index rows, Index cols,
               const std::filesystem::path& path);

// Metrics as a JSON object; absent fields are omitted.
void write_metrics_json(const MetricsReport& report, const std::filesystem::path& path);
MetricsReport read_metrics_json(const std::filesystem::path& path);

}  // namespace muasv
