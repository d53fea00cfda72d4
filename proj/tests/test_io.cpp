#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "oracles.hpp"
#include "pamm/error.hpp"
#include "pamm/io.hpp"
#include "pamm/pamm.hpp"

using namespace pamm;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "pamm_io_tests";
  fs::create_directories(dir);
  return dir / name;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST(BinaryMatrix, RoundTripIsBitExact) {
  const auto m = oracle::random_matrix(7, 5, 1, 1e3);
  std::stringstream ss;
  io::write_matrix_binary(ss, m);
  EXPECT_EQ(io::read_matrix_binary<float>(ss), m);

  const auto d = oracle::random_matrix64(3, 4, 2);
  std::stringstream s2;
  io::write_matrix_binary(s2, d);
  const auto h = io::read_matrix_header(s2);
  EXPECT_EQ(h.rows, 3u);
  EXPECT_EQ(h.cols, 4u);
  EXPECT_EQ(h.dtype, io::DType::f64);
  s2.seekg(0);
  EXPECT_EQ(io::read_matrix_binary<double>(s2), d);
}

TEST(BinaryMatrix, LayoutIsLittleEndian) {
  std::stringstream ss;
  io::write_matrix_binary(ss, DenseMatrix{{1.0f}});
  const std::string s = ss.str();
  ASSERT_EQ(s.size(), 4u + 2 + 8 + 8 + 1 + 4);
  EXPECT_EQ(s.substr(0, 4), "PAMM");
  EXPECT_EQ(static_cast<unsigned char>(s[4]), 1u);  // version, low byte first
  EXPECT_EQ(static_cast<unsigned char>(s[6]), 1u);  // rows
  EXPECT_EQ(static_cast<unsigned char>(s[s.size() - 1]), 0x3fu);
  EXPECT_EQ(static_cast<unsigned char>(s[s.size() - 2]), 0x80u);
}

TEST(BinaryMatrix, RejectsBadInput) {
  std::stringstream bad("XXXX0000");
  EXPECT_THROW(io::read_matrix_binary<float>(bad), IoError);
  std::stringstream ss;
  io::write_matrix_binary(ss, DenseMatrix(4, 4, 1.0f));
  std::stringstream trunc(ss.str().substr(0, ss.str().size() - 3));
  EXPECT_THROW(io::read_matrix_binary<float>(trunc), IoError);
}

TEST(CsvMatrix, RoundTripIsExact) {
  const auto m = oracle::random_matrix(6, 3, 4, 1e-3);
  std::stringstream ss;
  io::write_matrix_csv(ss, m);
  EXPECT_EQ(io::read_matrix_csv<float>(ss), m);
}

TEST(CsvMatrix, ToleratesSpacingAndSigns) {
  std::stringstream ss(" 1, +2.5 ,-3\r\n\n4,5e-1,6\n");
  EXPECT_EQ(io::read_matrix_csv<float>(ss), (DenseMatrix{{1, 2.5f, -3}, {4, 0.5f, 6}}));
}

TEST(CsvMatrix, RejectsBadInput) {
  std::stringstream ragged("1,2\n3\n");
  EXPECT_THROW(io::read_matrix_csv<float>(ragged), IoError);
  std::stringstream text("1,abc\n");
  EXPECT_THROW(io::read_matrix_csv<float>(text), IoError);
  std::stringstream empty("");
  EXPECT_THROW(io::read_matrix_csv<float>(empty), IoError);
}

TEST(Files, LoadDetectsFormat) {
  const auto m = oracle::random_matrix(5, 2, 8);
  io::save_matrix(scratch("m.csv"), m);
  io::save_matrix(scratch("m.bin"), m);
  EXPECT_EQ(slurp(scratch("m.csv")).substr(0, 4) == "PAMM", false);
  EXPECT_EQ(slurp(scratch("m.bin")).substr(0, 4), "PAMM");
  EXPECT_EQ(io::load_matrix(scratch("m.csv")), m);
  EXPECT_EQ(io::load_matrix(scratch("m.bin")), m);
  EXPECT_THROW(io::load_matrix(scratch("missing.bin")), IoError);
}

TEST(Files, AtomicWriteLeavesNoTemporary) {
  const auto p = scratch("sub/dir/out.txt");
  io::write_file_atomic(p, "hello");
  io::write_file_atomic(p, "world");
  EXPECT_EQ(slurp(p), "world");
  EXPECT_FALSE(fs::exists(p.string() + ".tmp"));
}

TEST(Compressed, RoundTrip) {
  const auto a = oracle::random_matrix(30, 4, 9);
  for (double eps : {0.0, 0.4, std::numeric_limits<double>::infinity()}) {
    const auto comp = compress(a, PammConfig::with_k(6, eps, 123));
    io::save_compressed(scratch("c.pamc"), comp);
    const auto back = io::load_compressed(scratch("c.pamc"));
    EXPECT_EQ(back.generators, comp.generators);
    EXPECT_EQ(back.alpha, comp.alpha);
    EXPECT_EQ(back.assignment, comp.assignment);
    EXPECT_EQ(back.beta, comp.beta);
    EXPECT_EQ(back.eta, comp.eta);
    EXPECT_EQ(back.epsilon, comp.epsilon);
    EXPECT_EQ(back.seed, 123u);
    EXPECT_EQ(slurp(scratch("c.pamc")).substr(0, 4), "PAMC");
  }
}

TEST(Compressed, UndefinedBetaSurvives) {
  const DenseMatrix a{{0, 0}, {1, 0}};
  const std::vector<std::size_t> g{0};
  auto comp = compress_with_generators(a, g, 0.0);
  comp.eta = 2;
  comp.beta.reset();
  std::stringstream ss;
  io::write_compressed(ss, comp);
  EXPECT_FALSE(io::read_compressed(ss).beta.has_value());
}

TEST(Compressed, RejectsCorruptAssignment) {
  const auto a = oracle::random_matrix(4, 2, 1);
  const auto comp = compress(a, PammConfig::with_k(2));
  std::stringstream ss;
  io::write_compressed(ss, comp);
  std::string bytes = ss.str();
  bytes[bytes.size() - 4] = 9;  // last assignment entry
  std::stringstream bad(bytes);
  EXPECT_THROW(io::read_compressed(bad), IoError);
  std::stringstream wrong_magic(std::string(io::kMatrixMagic, 4));
  EXPECT_THROW(io::read_compressed(wrong_magic), IoError);
}
