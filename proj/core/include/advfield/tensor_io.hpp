#pragma once

#include <filesystem>
#include <iosfwd>

#include "advfield/tensor.hpp"

namespace advfield {

// Binary tensor format shared by checkpoints and dataset payloads:
// magic "ADVF", u32 rank, u64 extent per axis, float64 payload,
// everything little-endian.
void write_tensor(std::ostream& out, const Tensor& t);
Tensor read_tensor(std::istream& in);

void save_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor load_tensor(const std::filesystem::path& path);

// 8-bit binary PGM for visual inspection; values mapped from [lo,hi].
void save_pgm(const std::filesystem::path& path, const Tensor& image,
              double lo = 0.0, double hi = 1.0);

// Round-trip double formatting (shortest form that parses back exactly).
std::string format_double(double v);
double parse_double(const std::string& s);

} // namespace advfield
