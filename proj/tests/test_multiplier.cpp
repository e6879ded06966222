#include "axnas/multiplier.hpp"

#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "axnas/rng.hpp"

namespace fs = std::filesystem;
using namespace axnas;

namespace {

// Independent oracle: metrics by direct mask-and-multiply enumeration,
// without going through any MultiplierModel table.
std::pair<double, double> oracle_operand_trunc_metrics(int bits) {
  const int mask = 0xff & ~((1 << bits) - 1);
  double sum = 0.0, worst = 0.0;
  for (int a = 0; a < 256; ++a) {
    for (int b = 0; b < 256; ++b) {
      const double approx = (a & mask) * (b & mask);
      const double diff = std::abs(approx - a * b);
      sum += diff;
      worst = std::max(worst, diff);
    }
  }
  return {sum / 65536.0, worst};
}

std::string temp_path(const char* name) {
  return (fs::temp_directory_path() / name).string();
}

}  // namespace

TEST(BuildExact, ExhaustiveTableMatchesArithmetic) {
  const MultiplierModel m = build_exact();
  for (int a = 0; a < 256; ++a)
    for (int b = 0; b < 256; ++b)
      ASSERT_EQ(m.multiply(static_cast<std::uint8_t>(a),
                           static_cast<std::uint8_t>(b)),
                a * b);
  EXPECT_TRUE(m.is_exact);
  EXPECT_EQ(m.mae, 0.0);
  EXPECT_EQ(m.wce, 0.0);
}

TEST(BuildExact, ZeroOperandAndCorners) {
  const MultiplierModel m = build_exact();
  for (int b = 0; b < 256; ++b)
    EXPECT_EQ(m.multiply(0, static_cast<std::uint8_t>(b)), 0);
  EXPECT_EQ(m.multiply(255, 255), 65025);
  EXPECT_EQ(m.multiply(12, 11), 132);
}

TEST(BuildTruncated, ZeroBitsEqualsExact) {
  const MultiplierModel t0 = build_truncated(0, 1.0);
  const MultiplierModel exact = build_exact();
  EXPECT_EQ(t0.table, exact.table);
  EXPECT_TRUE(t0.is_exact);
}

TEST(BuildTruncated, HandMaskedExamples) {
  const MultiplierModel t2 = build_truncated(2, 1.0);
  // 7 -> 0b0100 = 4, 5 -> 4, product 16
  EXPECT_EQ(t2.multiply(7, 5), 16);
  const MultiplierModel t4 = build_truncated(4, 1.0);
  // 200 -> 192, 100 -> 96
  EXPECT_EQ(t4.multiply(200, 100), 192 * 96);
}

TEST(BuildTruncated, MetricsMatchEnumerationOracle) {
  for (int bits : {1, 2, 3}) {
    const auto [mae, wce] = oracle_operand_trunc_metrics(bits);
    const MultiplierModel m = build_truncated(bits, 1.0);
    EXPECT_DOUBLE_EQ(m.mae, mae) << "bits=" << bits;
    EXPECT_DOUBLE_EQ(m.wce, wce) << "bits=" << bits;
  }
  // Frozen from the oracle above.
  EXPECT_DOUBLE_EQ(build_truncated(2, 1.0).mae, 380.25);
}

TEST(BuildTruncated, RejectsOutOfRangeBits) {
  EXPECT_THROW(build_truncated(-1, 1.0), ConfigError);
  EXPECT_THROW(build_truncated(8, 1.0), ConfigError);
}

TEST(ErrorMetrics, SingleCorruptionSetsWorstCase) {
  MultiplierModel m = build_exact();
  std::vector<std::uint16_t> table = m.table;
  table[(255 << 8) | 255] = 65025 - 777;
  const auto [mae, wce] = error_metrics(table);
  EXPECT_EQ(wce, 777.0);
  EXPECT_DOUBLE_EQ(mae, 777.0 / 65536.0);
}

TEST(Multiply, TableFidelityOnRandomTriples) {
  const MultiplierLibrary lib = default_library();
  Rng rng(20240811);
  for (int trial = 0; trial < 10000; ++trial) {
    const auto& m = lib.at(static_cast<int>(rng.next_below(lib.size())));
    const auto a = static_cast<std::uint8_t>(rng.next_below(256));
    const auto b = static_cast<std::uint8_t>(rng.next_below(256));
    ASSERT_EQ(m.multiply(a, b),
              m.table[(static_cast<std::size_t>(a) << 8) | b]);
  }
}

TEST(LutFile, RoundTripPreservesModel) {
  const std::string path = temp_path("axnas_lut_roundtrip.axm");
  const MultiplierModel original = build_truncated(3, 0.25, "mul8u_rt3");
  save_lut_file(original, path);
  EXPECT_EQ(fs::file_size(path), kLutFileSize);
  const MultiplierModel loaded = load_lut_file(path);
  EXPECT_EQ(loaded.id, "mul8u_rt3");
  EXPECT_EQ(loaded.table, original.table);
  EXPECT_DOUBLE_EQ(loaded.energy_per_op, 0.25);
  EXPECT_DOUBLE_EQ(loaded.mae, original.mae);
  fs::remove(path);
}

TEST(LutFile, ExactTableLoadsAsExact) {
  const std::string path = temp_path("axnas_lut_exact.axm");
  save_lut_file(build_exact("mul8u_file_exact", 0.56), path);
  EXPECT_TRUE(load_lut_file(path).is_exact);
  fs::remove(path);
}

TEST(LutFile, RejectsBadMagic) {
  const std::string path = temp_path("axnas_lut_badmagic.axm");
  save_lut_file(build_exact(), path);
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(0);
    f.write("BOGUS!!", 7);
  }
  try {
    load_lut_file(path);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("byte offset 0"), std::string::npos);
  }
  fs::remove(path);
}

TEST(LutFile, RejectsTruncatedTable) {
  const std::string path = temp_path("axnas_lut_short.axm");
  save_lut_file(build_exact(), path);
  fs::resize_file(path, kLutFileSize - 2);  // 65535 table entries
  try {
    load_lut_file(path);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find(std::to_string(kLutFileSize - 2)),
              std::string::npos);
  }
  fs::remove(path);
}

TEST(LutFile, RejectsNonPositiveEnergy) {
  const std::string path = temp_path("axnas_lut_zeroenergy.axm");
  MultiplierModel m = zero_energy_sentinel();
  m.id = "mul8u_zero";
  save_lut_file(m, path);
  try {
    load_lut_file(path);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("byte offset 40"), std::string::npos);
  }
  fs::remove(path);
}

TEST(MakeModel, RejectsWrongTableLength) {
  std::vector<std::uint16_t> table(65535, 0);
  EXPECT_THROW(make_model("short", std::move(table), 1.0), FormatError);
}

TEST(MakeModel, ChecksClaimedMetadata) {
  MultiplierModel m = build_truncated(2, 1.0);
  const ClaimedMetrics good{m.mae, m.wce};
  EXPECT_NO_THROW(make_model("ok", m.table, 1.0, &good));
  const ClaimedMetrics bad{m.mae + 0.6, m.wce};
  EXPECT_THROW(make_model("bad", m.table, 1.0, &bad), FormatError);
}

TEST(DefaultLibrary, MetadataConsistentWithTables) {
  const MultiplierLibrary lib = default_library();
  for (int i = 0; i < lib.size(); ++i) {
    const auto& m = lib.at(i);
    const auto [mae, wce] = error_metrics(m);
    EXPECT_DOUBLE_EQ(mae, m.mae) << m.id;
    EXPECT_DOUBLE_EQ(wce, m.wce) << m.id;
    EXPECT_GT(m.energy_per_op, 0.0) << m.id;
  }
}

TEST(DefaultLibrary, StableOrderAcrossLoads) {
  const MultiplierLibrary a = default_library();
  const MultiplierLibrary b = default_library();
  ASSERT_EQ(a.size(), b.size());
  for (int i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a.at(i).id, b.at(i).id);
    EXPECT_EQ(a.at(i).table, b.at(i).table);
  }
}

TEST(DefaultLibrary, ContainsExactReference) {
  const MultiplierLibrary lib = default_library();
  EXPECT_EQ(lib.exact_index(), lib.index_of("mul8u_JFF"));
  EXPECT_TRUE(lib.at(lib.exact_index()).is_exact);
  EXPECT_DOUBLE_EQ(lib.at(lib.exact_index()).energy_per_op, 0.56);
}

TEST(Library, RejectsDuplicateIdsAndMissingExact) {
  std::vector<MultiplierModel> dup;
  dup.push_back(build_exact("same", 1.0));
  dup.push_back(build_exact("same", 1.0));
  EXPECT_THROW(MultiplierLibrary{std::move(dup)}, ConfigError);

  std::vector<MultiplierModel> no_exact;
  no_exact.push_back(build_truncated(2, 1.0));
  EXPECT_THROW(MultiplierLibrary{std::move(no_exact)}, ConfigError);
}

TEST(Sentinel, ZeroEnergyAllowedOnlyViaFactory) {
  EXPECT_EQ(zero_energy_sentinel().energy_per_op, 0.0);
  std::vector<std::uint16_t> table(kMultTableEntries, 0);
  EXPECT_THROW(make_model("m", std::move(table), 0.0), FormatError);
}
