#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "dsanet/hsi.hpp"

namespace dsanet::specview {

// L x L Pearson correlation between band images.
struct BandCorrelation {
  std::size_t bands = 0;
  std::vector<double> values;

  double operator()(std::size_t i, std::size_t j) const { return values[i * bands + j]; }
};

// Assignment of every band to exactly one of N spectral views.
struct ViewPartition {
  std::size_t clusters = 0;            // M
  std::vector<std::size_t> cluster_of; // band -> cluster label; empty when unknown
  std::vector<std::vector<std::size_t>> views;

  std::size_t view_count() const { return views.size(); }
  std::size_t band_count() const;
};

// Correlation over up to sample_size pixels drawn without replacement with
// the given seed (all pixels when the image is smaller). Constant bands
// correlate 0 with every other band.
BandCorrelation band_correlation(const hsi::Cube& cube, std::size_t sample_size,
                                 std::uint64_t seed);

// Average-linkage agglomerative clustering on 1 - corr down to M clusters.
// Labels are numbered by each cluster's smallest band index.
std::vector<std::size_t> cluster_bands(const BandCorrelation& corr, std::size_t clusters);

// Deals the sorted bands of every cluster round-robin over N views.
ViewPartition partition_views(std::span<const std::size_t> labels, std::size_t views);

// Spectrum values at each view's bands, in ascending band order.
std::vector<std::vector<double>> slice_views(std::span<const double> spectrum,
                                             const ViewPartition& partition);

// Throws unless the views form a bijection onto 0..L-1 with ascending bands.
void validate(const ViewPartition& partition);

// Text format: "# M=<M> N=<N> L=<L>" then one line of comma-separated band
// indices per view.
std::string format_partition(const ViewPartition& partition);
ViewPartition parse_partition(const std::string& text);
void save_partition(const ViewPartition& partition, const std::filesystem::path& path);
ViewPartition load_partition(const std::filesystem::path& path);

}  // namespace dsanet::specview
