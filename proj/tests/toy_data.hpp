#pragma once

// Synthetic fixtures shared by the search and harness tests.

#include <cstdint>
#include <vector>

#include "axnas/engine.hpp"
#include "axnas/rng.hpp"

namespace axnas::testutil {

struct ToyData {
  std::vector<std::uint8_t> pixels;
  std::vector<int> labels;
  int h = 8, w = 8, c = 1;
  int num_classes = 2;

  DataView view() const {
    return DataView{pixels.data(),       labels.data(),
                    static_cast<int>(labels.size()),
                    h,                   w,
                    c,                   num_classes};
  }
};

// Two linearly separable classes (bright left half vs bright right half).
inline ToyData two_class_toy(int n_per_class, std::uint64_t seed = 7,
                             int hw = 8) {
  ToyData d;
  d.h = d.w = hw;
  Rng rng(seed);
  for (int i = 0; i < 2 * n_per_class; ++i) {
    const int label = i % 2;
    for (int y = 0; y < d.h; ++y) {
      for (int x = 0; x < d.w; ++x) {
        const bool bright = (x < d.w / 2) == (label == 0);
        d.pixels.push_back(static_cast<std::uint8_t>(
            (bright ? 200 : 30) + rng.next_below(30)));
      }
    }
    d.labels.push_back(label);
  }
  return d;
}

}  // namespace axnas::testutil
