#include "pamm/io.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>
#include <system_error>

#include "pamm/error.hpp"

namespace pamm::io {
namespace {

template <typename U>
void put_le(std::ostream& os, U value) {
  static_assert(std::is_unsigned_v<U>);
  char buf[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) buf[i] = static_cast<char>((value >> (8 * i)) & 0xff);
  os.write(buf, sizeof(U));
}

template <typename U>
U get_le(std::istream& is) {
  unsigned char buf[sizeof(U)];
  if (!is.read(reinterpret_cast<char*>(buf), sizeof(U))) throw IoError("unexpected end of file");
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(buf[i]) << (8 * i);
  return v;
}

void put_f32(std::ostream& os, float v) { put_le(os, std::bit_cast<std::uint32_t>(v)); }
void put_f64(std::ostream& os, double v) { put_le(os, std::bit_cast<std::uint64_t>(v)); }
float get_f32(std::istream& is) { return std::bit_cast<float>(get_le<std::uint32_t>(is)); }
double get_f64(std::istream& is) { return std::bit_cast<double>(get_le<std::uint64_t>(is)); }

void expect_magic(std::istream& is, const char (&magic)[4], const char* what) {
  char got[4];
  if (!is.read(got, 4) || std::memcmp(got, magic, 4) != 0) {
    throw IoError(std::string("not a ") + what + " file (bad magic)");
  }
  const auto version = get_le<std::uint16_t>(is);
  if (version != kFormatVersion) {
    throw IoError(std::string(what) + " file version " + std::to_string(version) +
                  " is not supported");
  }
}

template <typename T>
void write_payload(std::ostream& os, const Matrix<T>& m, DType dtype) {
  os.write(kMatrixMagic, 4);
  put_le<std::uint16_t>(os, kFormatVersion);
  put_le<std::uint64_t>(os, m.rows());
  put_le<std::uint64_t>(os, m.cols());
  put_le<std::uint8_t>(os, static_cast<std::uint8_t>(dtype));
  for (T v : m.data()) {
    if constexpr (std::is_same_v<T, float>) put_f32(os, v);
    else put_f64(os, v);
  }
  if (!os) throw IoError("failed to write matrix");
}

template <typename T>
std::string format_number(T v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return in;
}

}  // namespace

void write_matrix_binary(std::ostream& os, const DenseMatrix& m) { write_payload(os, m, DType::f32); }
void write_matrix_binary(std::ostream& os, const DenseMatrix64& m) { write_payload(os, m, DType::f64); }

MatrixHeader read_matrix_header(std::istream& is) {
  expect_magic(is, kMatrixMagic, "matrix");
  MatrixHeader h;
  h.rows = get_le<std::uint64_t>(is);
  h.cols = get_le<std::uint64_t>(is);
  const auto dt = get_le<std::uint8_t>(is);
  if (dt > 1) throw IoError("matrix file has unknown dtype " + std::to_string(dt));
  h.dtype = static_cast<DType>(dt);
  return h;
}

template <typename T>
Matrix<T> read_matrix_binary(std::istream& is) {
  const MatrixHeader h = read_matrix_header(is);
  const std::uint64_t count = h.rows * h.cols;
  if (h.cols != 0 && count / h.cols != h.rows) throw IoError("matrix dimensions overflow");
  std::vector<T> data;
  data.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    data.push_back(static_cast<T>(h.dtype == DType::f32 ? get_f32(is) : get_f64(is)));
  }
  return Matrix<T>(h.rows, h.cols, std::move(data));
}

template <typename T>
void write_matrix_csv(std::ostream& os, const Matrix<T>& m) {
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto r = m.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) {
      if (j) os << ',';
      os << format_number(r[j]);
    }
    os << '\n';
  }
  if (!os) throw IoError("failed to write CSV matrix");
}

template <typename T>
Matrix<T> read_matrix_csv(std::istream& is) {
  std::vector<T> data;
  std::size_t rows = 0, cols = 0;
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::size_t count = 0;
    const char* p = line.data();
    const char* end = line.data() + line.size();
    while (p <= end) {
      const char* comma = std::find(p, end, ',');
      const char* a = p;
      const char* z = comma;
      while (a < z && std::isspace(static_cast<unsigned char>(*a))) ++a;
      while (z > a && std::isspace(static_cast<unsigned char>(z[-1]))) --z;
      if (a < z && *a == '+') ++a;
      T v{};
      auto res = std::from_chars(a, z, v);
      if (res.ec != std::errc() || res.ptr != z) {
        throw IoError("CSV row " + std::to_string(rows + 1) + ": cannot parse '" +
                      std::string(a, z) + "'");
      }
      data.push_back(v);
      ++count;
      if (comma == end) break;
      p = comma + 1;
    }
    if (rows == 0) cols = count;
    else if (count != cols) throw IoError("CSV row " + std::to_string(rows + 1) + " is ragged");
    ++rows;
  }
  if (rows == 0) throw IoError("CSV matrix is empty");
  return Matrix<T>(rows, cols, std::move(data));
}

void write_compressed(std::ostream& os, const CompressedActivation<float>& comp) {
  os.write(kCompressedMagic, 4);
  put_le<std::uint16_t>(os, kFormatVersion);
  put_le<std::uint64_t>(os, comp.b);
  put_le<std::uint64_t>(os, comp.n);
  put_le<std::uint64_t>(os, comp.k);
  put_le<std::uint64_t>(os, comp.eta);
  put_f64(os, std::isinf(comp.epsilon) ? std::nan("") : comp.epsilon);
  put_f64(os, comp.beta ? *comp.beta : std::nan(""));
  put_le<std::uint64_t>(os, comp.seed);
  for (float v : comp.generators.data()) put_f32(os, v);
  for (float v : comp.alpha) put_f32(os, v);
  for (std::uint32_t v : comp.assignment) put_le<std::uint32_t>(os, v);
  if (!os) throw IoError("failed to write compressed activation");
}

CompressedActivation<float> read_compressed(std::istream& is) {
  expect_magic(is, kCompressedMagic, "compressed activation");
  CompressedActivation<float> c;
  c.b = get_le<std::uint64_t>(is);
  c.n = get_le<std::uint64_t>(is);
  c.k = get_le<std::uint64_t>(is);
  c.eta = get_le<std::uint64_t>(is);
  const double eps = get_f64(is);
  c.epsilon = std::isnan(eps) ? kNoTolerance : eps;
  const double beta = get_f64(is);
  if (!std::isnan(beta)) c.beta = beta;
  c.seed = get_le<std::uint64_t>(is);
  if (c.k == 0 || c.k > c.b || c.eta > c.b) throw IoError("compressed activation header is inconsistent");

  std::vector<float> gen(c.k * c.n);
  for (auto& v : gen) v = get_f32(is);
  c.generators = DenseMatrix(c.k, c.n, std::move(gen));
  c.alpha.resize(c.b);
  for (auto& v : c.alpha) v = get_f32(is);
  c.assignment.resize(c.b);
  for (auto& v : c.assignment) {
    v = get_le<std::uint32_t>(is);
    if (v >= c.k) throw IoError("compressed activation assignment out of range");
  }
  return c;
}

DenseMatrix load_matrix(const std::filesystem::path& path) {
  auto in = open_in(path);
  char head[4] = {};
  in.read(head, 4);
  const bool binary = in.gcount() == 4 && std::memcmp(head, kMatrixMagic, 4) == 0;
  in.clear();
  in.seekg(0);
  return binary ? read_matrix_binary<float>(in) : read_matrix_csv<float>(in);
}

void save_matrix(const std::filesystem::path& path, const DenseMatrix& m) {
  std::ostringstream os(std::ios::binary);
  if (path.extension() == ".csv") write_matrix_csv(os, m);
  else write_matrix_binary(os, m);
  write_file_atomic(path, os.str());
}

void save_compressed(const std::filesystem::path& path, const CompressedActivation<float>& comp) {
  std::ostringstream os(std::ios::binary);
  write_compressed(os, comp);
  write_file_atomic(path, os.str());
}

CompressedActivation<float> load_compressed(const std::filesystem::path& path) {
  auto in = open_in(path);
  return read_compressed(in);
}

void write_file_atomic(const std::filesystem::path& path, const std::string& bytes) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("failed writing " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

template Matrix<float> read_matrix_binary<float>(std::istream&);
template Matrix<double> read_matrix_binary<double>(std::istream&);
template void write_matrix_csv<float>(std::ostream&, const Matrix<float>&);
template void write_matrix_csv<double>(std::ostream&, const Matrix<double>&);
template Matrix<float> read_matrix_csv<float>(std::istream&);
template Matrix<double> read_matrix_csv<double>(std::istream&);

}  // namespace pamm::io
