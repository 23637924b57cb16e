#pragma once

#include <cstdint>
#include <vector>

#include "boxprune/common.hpp"

namespace boxprune {

// Materialized pruning profile: one Boolean retain vector per flag. Flags
// that several tensor dimensions inherit exist exactly once here, so the
// inherited dimensions cannot diverge by construction.
struct MaskSet {
  std::vector<std::vector<uint8_t>> retain;

  static MaskSet all_ones(const std::vector<int>& lengths) {
    MaskSet m;
    m.retain.reserve(lengths.size());
    for (int len : lengths) m.retain.emplace_back(size_t(len), uint8_t(1));
    return m;
  }

  int flag_count() const { return int(retain.size()); }

  int ones(int flag) const {
    int n = 0;
    for (uint8_t v : retain[size_t(flag)]) n += v != 0;
    return n;
  }

  std::vector<int> ones_counts() const {
    std::vector<int> out(retain.size());
    for (size_t f = 0; f < retain.size(); ++f) out[f] = ones(int(f));
    return out;
  }

  std::vector<int> kept_indices(int flag) const {
    std::vector<int> idx;
    const auto& v = retain[size_t(flag)];
    for (size_t i = 0; i < v.size(); ++i) {
      if (v[i]) idx.push_back(int(i));
    }
    return idx;
  }
};

}  // namespace boxprune
