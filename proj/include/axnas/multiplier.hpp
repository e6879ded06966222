#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "axnas/error.hpp"

namespace axnas {

// Exhaustive 8x8-bit unsigned multiplier model. The table is the single
// source of truth: multiply() only ever reads it, never computes a product.
struct MultiplierModel {
  std::string id;
  std::vector<std::uint16_t> table;  // 65536 entries, index a*256 + b
  double energy_per_op = 0.0;        // pJ per multiplication
  double mae = 0.0;                  // mean |table(a,b) - a*b| over all pairs
  double wce = 0.0;                  // worst-case absolute error
  bool is_exact = false;

  std::uint16_t multiply(std::uint8_t a, std::uint8_t b) const {
    return table[(static_cast<std::size_t>(a) << 8) | b];
  }
};

using MultiplierPtr = std::shared_ptr<const MultiplierModel>;

inline constexpr std::size_t kMultTableEntries = 65536;
inline constexpr std::size_t kLutFileSize = 131120;  // 8 + 32 + 8 + 2*65536

// Exhaustive error metrics over the full input domain.
inline std::pair<double, double> error_metrics(
    const std::vector<std::uint16_t>& table) {
  double sum = 0.0;
  double worst = 0.0;
  for (int a = 0; a < 256; ++a) {
    for (int b = 0; b < 256; ++b) {
      const double diff =
          std::abs(static_cast<double>(table[(a << 8) | b]) - a * b);
      sum += diff;
      worst = std::max(worst, diff);
    }
  }
  return {sum / static_cast<double>(kMultTableEntries), worst};
}

inline std::pair<double, double> error_metrics(const MultiplierModel& m) {
  return error_metrics(m.table);
}

// Tolerance for claimed-vs-recomputed error metadata; guards corrupted files.
inline constexpr double kMetadataTolerance = 0.5;

struct ClaimedMetrics {
  double mae = 0.0;
  double wce = 0.0;
};

inline MultiplierModel make_model(std::string id,
                                  std::vector<std::uint16_t> table,
                                  double energy_pj,
                                  const ClaimedMetrics* claimed = nullptr,
                                  bool allow_zero_energy = false) {
  if (table.size() != kMultTableEntries) {
    throw FormatError("multiplier '" + id + "': table has " +
                      std::to_string(table.size()) + " entries, expected " +
                      std::to_string(kMultTableEntries));
  }
  if (!(energy_pj > 0.0) && !allow_zero_energy) {
    throw FormatError("multiplier '" + id + "': energy_per_op must be > 0");
  }
  MultiplierModel m;
  m.id = std::move(id);
  m.table = std::move(table);
  m.energy_per_op = energy_pj;
  std::tie(m.mae, m.wce) = error_metrics(m.table);
  m.is_exact = m.wce == 0.0;
  if (claimed != nullptr) {
    if (std::abs(m.mae - claimed->mae) > kMetadataTolerance ||
        std::abs(m.wce - claimed->wce) > kMetadataTolerance) {
      char buf[160];
      std::snprintf(buf, sizeof(buf),
                    "recomputed metrics (mae=%.3f, wce=%.0f) disagree with "
                    "stored metadata (mae=%.3f, wce=%.0f)",
                    m.mae, m.wce, claimed->mae, claimed->wce);
      throw FormatError("multiplier '" + m.id + "': " + buf);
    }
  }
  return m;
}

inline MultiplierModel build_exact(std::string id = "mul8u_exact",
                                   double energy_pj = 0.56) {
  std::vector<std::uint16_t> table(kMultTableEntries);
  for (int a = 0; a < 256; ++a)
    for (int b = 0; b < 256; ++b)
      table[(a << 8) | b] = static_cast<std::uint16_t>(a * b);
  return make_model(std::move(id), std::move(table), energy_pj);
}

// Parametric family: zero the k least-significant bits of both operands.
inline MultiplierModel build_truncated(int bits, double energy_pj,
                                       std::string id = "") {
  if (bits < 0 || bits > 7) {
    throw ConfigError("operand truncation bits must be in [0, 7], got " +
                      std::to_string(bits));
  }
  const int mask = 0xff & ~((1 << bits) - 1);
  std::vector<std::uint16_t> table(kMultTableEntries);
  for (int a = 0; a < 256; ++a)
    for (int b = 0; b < 256; ++b)
      table[(a << 8) | b] = static_cast<std::uint16_t>((a & mask) * (b & mask));
  if (id.empty()) id = "mul8u_trunc" + std::to_string(bits);
  return make_model(std::move(id), std::move(table), energy_pj);
}

// Parametric family: zero the k least-significant bits of the exact product.
inline MultiplierModel build_product_truncated(int bits, double energy_pj,
                                               std::string id = "") {
  if (bits < 0 || bits > 15) {
    throw ConfigError("product truncation bits must be in [0, 15], got " +
                      std::to_string(bits));
  }
  const std::uint32_t mask = ~((1u << bits) - 1);
  std::vector<std::uint16_t> table(kMultTableEntries);
  for (int a = 0; a < 256; ++a)
    for (int b = 0; b < 256; ++b)
      table[(a << 8) | b] =
          static_cast<std::uint16_t>(static_cast<std::uint32_t>(a * b) & mask);
  if (id.empty()) id = "mul8u_ptrunc" + std::to_string(bits);
  return make_model(std::move(id), std::move(table), energy_pj);
}

// Zero-energy exact model; only unit tests may construct this.
inline MultiplierModel zero_energy_sentinel() {
  MultiplierModel m = build_exact("mul8u_test_sentinel", 1.0);
  m.energy_per_op = 0.0;
  return m;
}

namespace detail {

inline void put_u16le(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

inline void put_u64le(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i)
    out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline std::uint16_t get_u16le(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

inline std::uint64_t get_u64le(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

}  // namespace detail

inline constexpr char kLutMagic[8] = {'A', 'X', 'M', 'U', 'L', 'T', '8', '\0'};

// Serializes a model to the bit-exact LUT file layout:
//   8-byte magic, 32-byte zero-padded id, f64le energy [pJ],
//   65536 u16le products ordered by a*256+b.
inline void save_lut_file(const MultiplierModel& m, const std::string& path) {
  if (m.id.size() > 31) {
    throw FormatError("multiplier id '" + m.id +
                      "' too long for LUT header (max 31 chars)");
  }
  std::string out;
  out.reserve(kLutFileSize);
  out.append(kLutMagic, 8);
  out.append(m.id);
  out.append(32 - m.id.size(), '\0');
  detail::put_u64le(out, std::bit_cast<std::uint64_t>(m.energy_per_op));
  for (std::uint16_t v : m.table) detail::put_u16le(out, v);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw FormatError("cannot open '" + path + "' for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw FormatError("short write to '" + path + "'");
}

inline MultiplierModel load_lut_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open LUT file '" + path + "'");
  std::string data((std::istreambuf_iterator<char>(f)),
                   std::istreambuf_iterator<char>());
  if (data.size() != kLutFileSize) {
    throw FormatError("LUT file '" + path + "': size " +
                      std::to_string(data.size()) + " bytes, expected " +
                      std::to_string(kLutFileSize) +
                      " (content ends at byte offset " +
                      std::to_string(data.size()) + ")");
  }
  const auto* p = reinterpret_cast<const unsigned char*>(data.data());
  if (!std::equal(kLutMagic, kLutMagic + 8, data.data())) {
    throw FormatError("LUT file '" + path +
                      "': bad magic at byte offset 0, expected AXMULT8\\0");
  }
  const std::size_t id_end = data.find('\0', 8);
  if (id_end >= 40) {
    throw FormatError("LUT file '" + path +
                      "': id field at byte offset 8 is not zero-terminated "
                      "within 32 bytes");
  }
  std::string id = data.substr(8, id_end - 8);
  const double energy = std::bit_cast<double>(detail::get_u64le(p + 40));
  if (!std::isfinite(energy) || !(energy > 0.0)) {
    throw FormatError("LUT file '" + path +
                      "': energy_per_op at byte offset 40 must be a finite "
                      "positive value");
  }
  std::vector<std::uint16_t> table(kMultTableEntries);
  for (std::size_t i = 0; i < kMultTableEntries; ++i)
    table[i] = detail::get_u16le(p + 48 + 2 * i);
  return make_model(std::move(id), std::move(table), energy);
}

// Ordered multiplier list; an individual's multiplier gene indexes into it,
// so the order must be stable for the whole run.
class MultiplierLibrary {
 public:
  explicit MultiplierLibrary(std::vector<MultiplierModel> models) {
    if (models.empty()) throw ConfigError("multiplier library is empty");
    for (std::size_t i = 0; i < models.size(); ++i) {
      for (std::size_t j = i + 1; j < models.size(); ++j) {
        if (models[i].id == models[j].id) {
          throw ConfigError("duplicate multiplier id '" + models[i].id + "'");
        }
      }
    }
    bool any_exact = false;
    for (const auto& m : models) any_exact = any_exact || m.is_exact;
    if (!any_exact) {
      throw ConfigError("multiplier library must contain an exact model");
    }
    for (auto& m : models) {
      models_.push_back(std::make_shared<const MultiplierModel>(std::move(m)));
    }
  }

  int size() const { return static_cast<int>(models_.size()); }

  const MultiplierModel& at(int index) const {
    if (index < 0 || index >= size()) {
      throw ConfigError("multiplier index " + std::to_string(index) +
                        " out of range (library size " +
                        std::to_string(size()) + ")");
    }
    return *models_[static_cast<std::size_t>(index)];
  }

  MultiplierPtr share(int index) const {
    at(index);
    return models_[static_cast<std::size_t>(index)];
  }

  int index_of(const std::string& id) const {
    for (int i = 0; i < size(); ++i)
      if (models_[static_cast<std::size_t>(i)]->id == id) return i;
    return -1;
  }

  int exact_index() const {
    for (int i = 0; i < size(); ++i)
      if (models_[static_cast<std::size_t>(i)]->is_exact) return i;
    return -1;
  }

 private:
  std::vector<MultiplierPtr> models_;
};

namespace detail {

enum class StandInFamily { Exact, ProductTrunc, OperandTrunc };

struct BuiltinEntry {
  const char* id;
  double energy_pj;
  StandInFamily family;
  int bits;
  double mae;  // frozen from exhaustive enumeration of the stand-in table
  double wce;
};

// Published per-multiplication energies; the true circuit tables are not
// public, so each entry carries a stand-in table from a parametric family
// whose error grows as the published energy shrinks. Real tables can be
// substituted via LUT files without touching gene indices.
inline const std::vector<BuiltinEntry>& builtin_entries() {
  static const std::vector<BuiltinEntry> entries = {
      {"mul8u_JFF", 0.56, StandInFamily::Exact, 0, 0.0, 0.0},
      {"mul8u_JD", 0.48, StandInFamily::ProductTrunc, 2, 1.0, 3.0},
      {"mul8u_C1", 0.45, StandInFamily::ProductTrunc, 3, 2.75, 7.0},
      {"mul8u_GR", 0.38, StandInFamily::ProductTrunc, 4, 6.5, 15.0},
      {"mul8u_M1", 0.30, StandInFamily::ProductTrunc, 5, 14.25, 31.0},
      {"mul8u_85Q", 0.29, StandInFamily::ProductTrunc, 6, 30.0, 63.0},
      {"mul8u_2N4", 0.15, StandInFamily::OperandTrunc, 2, 380.25, 1521.0},
      {"mul8u_8DU", 0.02, StandInFamily::OperandTrunc, 3, 880.25, 3521.0},
      {"mul8u_KX", 0.01, StandInFamily::OperandTrunc, 4, 1856.25, 7425.0},
  };
  return entries;
}

}  // namespace detail

// The shipped library: ids and energies as published, mul8u_JFF exact.
inline MultiplierLibrary default_library() {
  std::vector<MultiplierModel> models;
  for (const auto& e : detail::builtin_entries()) {
    MultiplierModel m;
    switch (e.family) {
      case detail::StandInFamily::Exact:
        m = build_exact(e.id, e.energy_pj);
        break;
      case detail::StandInFamily::ProductTrunc:
        m = build_product_truncated(e.bits, e.energy_pj, e.id);
        break;
      case detail::StandInFamily::OperandTrunc:
        m = build_truncated(e.bits, e.energy_pj, e.id);
        break;
    }
    const ClaimedMetrics claimed{e.mae, e.wce};
    models.push_back(
        make_model(m.id, std::move(m.table), e.energy_pj, &claimed));
  }
  return MultiplierLibrary(std::move(models));
}

}  // namespace axnas
