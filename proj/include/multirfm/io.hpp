#pragma once

#include "multirfm/types.hpp"

#include <string>

namespace multirfm::io {

/// Formats with 17 significant digits so text round-trips bit-exactly.
std::string format_double(double value);

/// Comma-separated numeric matrix, observations as rows. A single leading
/// header row is detected (first cell non-numeric) and skipped.
Matrix read_csv_matrix(const std::string& path);

void write_csv_matrix(const std::string& path, const Matrix& m);

/// Convenience wrappers for length-n column files.
Vector read_csv_vector(const std::string& path);
void write_csv_vector(const std::string& path, const Vector& v);

}  // namespace multirfm::io
