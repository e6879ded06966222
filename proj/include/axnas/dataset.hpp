#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "axnas/engine.hpp"
#include "axnas/error.hpp"
#include "axnas/rng.hpp"

namespace axnas {

// Labeled image set, stored as raw bytes; pixels map to [0,1] reals when
// batches are assembled for the engine.
struct Dataset {
  int h = 0, w = 0, c = 0;
  int num_classes = 0;
  std::vector<std::uint8_t> pixels;  // n*h*w*c, NHWC
  std::vector<int> labels;

  int size() const { return static_cast<int>(labels.size()); }

  DataView view() const {
    return DataView{pixels.data(), labels.data(), size(), h, w, c,
                    num_classes};
  }

  // First n records (used to honor a configured test-set size).
  Dataset take(int n) const {
    Dataset out = *this;
    n = std::min(n, size());
    out.labels.assign(labels.begin(), labels.begin() + n);
    out.pixels.assign(pixels.begin(),
                      pixels.begin() + static_cast<std::size_t>(n) * h * w * c);
    return out;
  }
};

namespace detail {

inline std::uint32_t read_u32_be(const unsigned char* p) {
  return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) |
         (std::uint32_t(p[2]) << 8) | std::uint32_t(p[3]);
}

inline void write_u32_be(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>((v >> 24) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>(v & 0xff));
}

inline std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open '" + path + "'");
  return std::string((std::istreambuf_iterator<char>(f)),
                     std::istreambuf_iterator<char>());
}

}  // namespace detail

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

// IDX pair loader (big-endian magic + dims, raw bytes). Images are
// grayscale, so c = 1.
inline Dataset load_idx(const std::string& images_path,
                        const std::string& labels_path) {
  const std::string img = detail::read_file(images_path);
  if (img.size() < 16)
    throw FormatError("IDX file '" + images_path + "': truncated header (" +
                      std::to_string(img.size()) + " bytes)");
  const auto* ip = reinterpret_cast<const unsigned char*>(img.data());
  if (detail::read_u32_be(ip) != kIdxImagesMagic)
    throw FormatError("IDX file '" + images_path +
                      "': bad magic at byte offset 0 (expected 0x00000803)");
  const std::uint32_t n = detail::read_u32_be(ip + 4);
  const std::uint32_t h = detail::read_u32_be(ip + 8);
  const std::uint32_t w = detail::read_u32_be(ip + 12);
  const std::size_t want = 16 + std::size_t(n) * h * w;
  if (img.size() != want)
    throw FormatError("IDX file '" + images_path + "': size " +
                      std::to_string(img.size()) + " bytes, expected " +
                      std::to_string(want));

  const std::string lab = detail::read_file(labels_path);
  if (lab.size() < 8)
    throw FormatError("IDX file '" + labels_path + "': truncated header");
  const auto* lp = reinterpret_cast<const unsigned char*>(lab.data());
  if (detail::read_u32_be(lp) != kIdxLabelsMagic)
    throw FormatError("IDX file '" + labels_path +
                      "': bad magic at byte offset 0 (expected 0x00000801)");
  const std::uint32_t ln = detail::read_u32_be(lp + 4);
  if (lab.size() != 8 + std::size_t(ln))
    throw FormatError("IDX file '" + labels_path + "': size mismatch");
  if (ln != n)
    throw FormatError("IDX pair: " + std::to_string(n) + " images vs " +
                      std::to_string(ln) + " labels");

  Dataset d;
  d.h = static_cast<int>(h);
  d.w = static_cast<int>(w);
  d.c = 1;
  d.pixels.assign(img.begin() + 16, img.end());
  d.labels.reserve(ln);
  int max_label = 0;
  for (std::uint32_t i = 0; i < ln; ++i) {
    const int label = lp[8 + i];
    max_label = std::max(max_label, label);
    d.labels.push_back(label);
  }
  d.num_classes = max_label + 1;
  return d;
}

inline void save_idx(const Dataset& d, const std::string& images_path,
                     const std::string& labels_path) {
  if (d.c != 1)
    throw FormatError("IDX layout stores grayscale images only (c = 1)");
  std::string img;
  detail::write_u32_be(img, kIdxImagesMagic);
  detail::write_u32_be(img, static_cast<std::uint32_t>(d.size()));
  detail::write_u32_be(img, static_cast<std::uint32_t>(d.h));
  detail::write_u32_be(img, static_cast<std::uint32_t>(d.w));
  img.append(d.pixels.begin(), d.pixels.end());
  std::string lab;
  detail::write_u32_be(lab, kIdxLabelsMagic);
  detail::write_u32_be(lab, static_cast<std::uint32_t>(d.size()));
  for (int label : d.labels) lab.push_back(static_cast<char>(label));
  for (const auto& [path, blob] :
       {std::pair{images_path, &img}, std::pair{labels_path, &lab}}) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw FormatError("cannot open '" + path + "' for writing");
    f.write(blob->data(), static_cast<std::streamsize>(blob->size()));
    if (!f) throw FormatError("short write to '" + path + "'");
  }
}

// Standard CIFAR-10 binary batches: per record one label byte plus 3072
// channel-planar pixel bytes (R, G, B planes of a row-major 32x32 image).
inline Dataset load_cifar10_file(const std::string& path) {
  constexpr std::size_t kRecord = 3073;
  const std::string blob = detail::read_file(path);
  if (blob.size() % kRecord != 0)
    throw FormatError("CIFAR batch '" + path + "': size " +
                      std::to_string(blob.size()) +
                      " is not a whole number of 3073-byte records "
                      "(truncated at byte offset " +
                      std::to_string(blob.size() - blob.size() % kRecord) +
                      ")");
  const std::size_t records = blob.size() / kRecord;
  Dataset d;
  d.h = d.w = 32;
  d.c = 3;
  d.num_classes = 10;
  d.pixels.resize(records * 32 * 32 * 3);
  const auto* p = reinterpret_cast<const unsigned char*>(blob.data());
  for (std::size_t r = 0; r < records; ++r) {
    const unsigned char* rec = p + r * kRecord;
    const int label = rec[0];
    if (label > 9)
      throw FormatError("CIFAR batch '" + path + "': record " +
                        std::to_string(r) + " has label " +
                        std::to_string(label));
    d.labels.push_back(label);
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 32; ++x)
        for (int ch = 0; ch < 3; ++ch)
          d.pixels[((r * 32 + y) * 32 + x) * 3 + ch] =
              rec[1 + ch * 1024 + y * 32 + x];
  }
  return d;
}

struct Cifar10 {
  Dataset train;
  Dataset test;
};

inline Cifar10 load_cifar10_binary(const std::string& dir) {
  namespace fs = std::filesystem;
  Cifar10 out;
  bool first = true;
  for (int batch = 1; batch <= 5; ++batch) {
    const std::string path =
        (fs::path(dir) / ("data_batch_" + std::to_string(batch) + ".bin"))
            .string();
    Dataset part = load_cifar10_file(path);
    if (first) {
      out.train = std::move(part);
      first = false;
    } else {
      out.train.pixels.insert(out.train.pixels.end(), part.pixels.begin(),
                              part.pixels.end());
      out.train.labels.insert(out.train.labels.end(), part.labels.begin(),
                              part.labels.end());
    }
  }
  out.test = load_cifar10_file((fs::path(dir) / "test_batch.bin").string());
  return out;
}

// --- Bundled micro benchmark ---------------------------------------------------

// Ten parametric 10-class patterns at desk scale. Every sample carries random
// phase/intensity jitter and additive noise, so the task needs more than a
// constant predictor but trains in minutes on a CPU.
struct MicroSpec {
  int train_per_class = 200;
  int test_per_class = 50;
  int hw = 8;
  std::uint64_t seed = 7;
};

namespace detail {

inline std::uint8_t clamp_u8(int v) {
  return static_cast<std::uint8_t>(std::clamp(v, 0, 255));
}

inline void render_micro_sample(int cls, int hw, Rng& rng,
                                std::vector<std::uint8_t>& out) {
  const int bright = 145 + static_cast<int>(rng.next_below(60));
  const int dark = 55 + static_cast<int>(rng.next_below(60));
  const int phase = static_cast<int>(rng.next_below(4));
  const int jx = static_cast<int>(rng.next_below(3)) - 1;
  const int jy = static_cast<int>(rng.next_below(3)) - 1;
  for (int y = 0; y < hw; ++y) {
    for (int x = 0; x < hw; ++x) {
      bool on = false;
      switch (cls) {
        case 0: on = ((y + phase) / 2) % 2 == 0; break;      // h stripes
        case 1: on = ((x + phase) / 2) % 2 == 0; break;      // v stripes
        case 2: on = ((x + phase) % 4 < 2) == ((y + phase) % 4 < 2); break;
        case 3: {                                            // center blob
          const double cy = hw / 2.0 + jy, cx = hw / 2.0 + jx;
          const double r = (y - cy) * (y - cy) + (x - cx) * (x - cx);
          on = r <= hw * hw / 9.0;
          break;
        }
        case 4:                                              // frame
          on = y == 0 || x == 0 || y == hw - 1 || x == hw - 1;
          break;
        case 5: on = (x + y + phase) % 4 < 2; break;         // diagonal
        case 6: on = (x - y + phase + 2 * hw) % 4 < 2; break;
        case 7: break;                                       // h gradient
        case 8: break;                                       // v gradient
        case 9:                                              // cross
          on = std::abs(2 * y - hw + 1) <= 1 || std::abs(2 * x - hw + 1) <= 1;
          break;
      }
      int value;
      if (cls == 7) {
        value = dark + (bright - dark) * x / (hw - 1);
      } else if (cls == 8) {
        value = dark + (bright - dark) * y / (hw - 1);
      } else {
        value = on ? bright : dark;
      }
      value += static_cast<int>(rng.next_below(111)) - 55;  // noise
      out.push_back(clamp_u8(value));
    }
  }
}

}  // namespace detail

inline std::pair<Dataset, Dataset> make_micro_dataset(const MicroSpec& spec) {
  Rng rng(spec.seed);
  auto build = [&](int per_class) {
    Dataset d;
    d.h = d.w = spec.hw;
    d.c = 1;
    d.num_classes = 10;
    for (int i = 0; i < per_class * 10; ++i) {
      const int cls = i % 10;
      detail::render_micro_sample(cls, spec.hw, rng, d.pixels);
      d.labels.push_back(cls);
    }
    return d;
  };
  Dataset train = build(spec.train_per_class);
  Dataset test = build(spec.test_per_class);
  return {std::move(train), std::move(test)};
}

}  // namespace axnas
