#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

namespace dsanet::hsi {

// H x W image of L-band spectra, band-interleaved by pixel: the spectrum of
// pixel (r, c) occupies values[(r * W + c) * L, ... + L).
struct Cube {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t bands = 0;
  std::vector<double> values;

  std::size_t pixel_count() const { return height * width; }
  std::span<const double> pixel(std::size_t index) const {
    return {values.data() + index * bands, bands};
  }
  std::span<const double> pixel(std::size_t row, std::size_t col) const {
    return pixel(row * width + col);
  }
};

// Reference endmembers (P x L, one material per row) and per-pixel
// abundances (H*W x P) for a cube.
struct GroundTruth {
  std::size_t materials = 0;
  std::size_t bands = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> endmembers;
  std::vector<double> abundances;

  std::span<const double> endmember(std::size_t p) const {
    return {endmembers.data() + p * bands, bands};
  }
  std::span<const double> abundance(std::size_t pixel) const {
    return {abundances.data() + pixel * materials, materials};
  }
};

// k x k neighbourhood of one pixel, flattened row-major into K = k^2 rows
// of L bands. The center pixel is row (K - 1) / 2.
struct Patch {
  std::size_t row = 0;
  std::size_t col = 0;
  std::size_t side = 0;
  std::size_t bands = 0;
  std::vector<double> pixels;

  std::size_t count() const { return side * side; }
  std::span<const double> pixel(std::size_t i) const { return {pixels.data() + i * bands, bands}; }
};

struct LoadedCube {
  Cube cube;
  std::optional<GroundTruth> truth;
};

// Checks the cube invariants (consistent size, finite, nonnegative).
void validate(const Cube& cube);
void validate(const GroundTruth& truth);

// HSIB / HSGT codecs. Files store float32; in-memory values are float64.
std::vector<unsigned char> encode_cube(const Cube& cube);
Cube decode_cube(std::span<const unsigned char> bytes);
std::vector<unsigned char> encode_truth(const GroundTruth& truth);
GroundTruth decode_truth(std::span<const unsigned char> bytes);

// "<name>.hsib" -> "<name>.gt.hsib"
std::filesystem::path truth_path_for(const std::filesystem::path& cube_path);

// Reads a cube and, when the sidecar exists next to it, its ground truth.
LoadedCube load_cube(const std::filesystem::path& path);
void save_cube(const Cube& cube, const std::filesystem::path& path);
GroundTruth load_truth(const std::filesystem::path& path);
void save_truth(const GroundTruth& truth, const std::filesystem::path& path);

// One row per material, L comma-separated values, no header.
void save_endmembers_csv(std::span<const double> endmembers, std::size_t materials,
                         std::size_t bands, const std::filesystem::path& path);

std::vector<unsigned char> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const unsigned char> bytes);

struct SyntheticOptions {
  std::size_t height = 40;
  std::size_t width = 40;
  std::size_t bands = 60;
  std::size_t materials = 3;
  double snr_db = 30.0;  // +infinity disables noise
  double alpha = 0.5;    // Dirichlet concentration
  std::uint64_t seed = 0;
};

struct SyntheticScene {
  Cube cube;
  GroundTruth truth;
};

// Linear-mixing scene: smooth bump-shaped endmembers, spatially coherent
// abundances on the simplex, additive white Gaussian noise at snr_db.
SyntheticScene generate_synthetic(const SyntheticOptions& options);

// k x k window around (row, col) with mirror padding at the borders.
Patch extract_patch(const Cube& cube, std::size_t row, std::size_t col, std::size_t side);

// Mirror index into [0, n) without repeating the edge sample.
std::size_t reflect_index(std::ptrdiff_t index, std::size_t n);

// Divides every value by the global maximum.
Cube normalize_cube(const Cube& cube);

}  // namespace dsanet::hsi
