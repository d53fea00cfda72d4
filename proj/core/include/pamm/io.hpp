#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>

#include "pamm/matrix.hpp"
#include "pamm/pamm.hpp"

namespace pamm::io {

// Binary matrix file: "PAMM", u16 version (1), u64 rows, u64 cols,
// u8 dtype (0 = f32, 1 = f64), row-major payload. All little-endian.
inline constexpr char kMatrixMagic[4] = {'P', 'A', 'M', 'M'};
// Compressed activation file: "PAMC", u16 version (1), u64 b, n, k, eta,
// f64 epsilon (NaN = no tolerance), f64 beta (NaN = undefined), u64 seed,
// then C (f32, k x n), alpha (f32, b), f (u32, b).
inline constexpr char kCompressedMagic[4] = {'P', 'A', 'M', 'C'};
inline constexpr std::uint16_t kFormatVersion = 1;

enum class DType : std::uint8_t { f32 = 0, f64 = 1 };

struct MatrixHeader {
  std::uint64_t rows = 0;
  std::uint64_t cols = 0;
  DType dtype = DType::f32;
};

void write_matrix_binary(std::ostream& os, const DenseMatrix& m);
void write_matrix_binary(std::ostream& os, const DenseMatrix64& m);
MatrixHeader read_matrix_header(std::istream& is);
/// Reads either dtype and converts to T.
template <typename T>
Matrix<T> read_matrix_binary(std::istream& is);

/// One row per line, comma separated, shortest round-trip decimal text.
template <typename T>
void write_matrix_csv(std::ostream& os, const Matrix<T>& m);
template <typename T>
Matrix<T> read_matrix_csv(std::istream& is);

void write_compressed(std::ostream& os, const CompressedActivation<float>& comp);
CompressedActivation<float> read_compressed(std::istream& is);

/// Loads a binary matrix file (detected by magic) or CSV text.
DenseMatrix load_matrix(const std::filesystem::path& path);
/// Saves as CSV when the extension is ".csv", otherwise binary f32.
void save_matrix(const std::filesystem::path& path, const DenseMatrix& m);

void save_compressed(const std::filesystem::path& path, const CompressedActivation<float>& comp);
CompressedActivation<float> load_compressed(const std::filesystem::path& path);

/// Writes to a sibling temporary and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& bytes);

}  // namespace pamm::io
