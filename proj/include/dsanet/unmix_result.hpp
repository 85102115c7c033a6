#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace dsanet {

// Estimated endmembers and per-pixel abundances for a whole cube.
struct UnmixResult {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t bands = 0;
  std::size_t materials = 0;
  std::vector<double> endmembers;  // L x P, column p is endmember p
  std::vector<double> abundances;  // H*W x P
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;

  double endmember(std::size_t band, std::size_t p) const {
    return endmembers[band * materials + p];
  }
  std::span<const double> abundance(std::size_t pixel) const {
    return {abundances.data() + pixel * materials, materials};
  }
};

}  // namespace dsanet
