#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "dsanet/hsi.hpp"
#include "dsanet/unmix_result.hpp"
#include "json.hpp"

namespace dsanet::eval {

// Spectral angle in radians, cosine clamped to [-1, 1].
double sad_metric(std::span<const double> e, std::span<const double> ehat);

// sqrt(mean((s - shat)^2))
double rmse_metric(std::span<const double> s, std::span<const double> shat);

// Largest P accepted by match_endmembers (exhaustive search over P!).
inline constexpr std::size_t kMaxMatchedEndmembers = 8;

// Permutation perm minimizing the mean SAD between ground-truth row i and
// estimated column perm[i]. est is L x P, gt is P x L. Among equal costs the
// lexicographically smallest permutation wins.
std::vector<std::size_t> match_endmembers(std::span<const double> est, std::span<const double> gt,
                                          std::size_t materials, std::size_t bands);

struct EvalReport {
  std::vector<std::size_t> permutation;  // gt endmember i <-> estimated column permutation[i]
  std::vector<double> sad_per_em;        // radians, in ground-truth order
  std::vector<double> rmse_per_em;
  double sad_avg = 0.0;
  double rmse_avg = 0.0;
  double runtime_s = 0.0;
};

EvalReport evaluate(const UnmixResult& result, const hsi::GroundTruth& truth);

// Mean per-endmember RMSE of predicting 1/P everywhere.
double uniform_baseline_rmse(const hsi::GroundTruth& truth);

// Binary PGM (P5, maxval 255) of one H x W plane in [0, 1]; each value maps
// to floor(255 * v + 0.5).
std::vector<unsigned char> encode_pgm(std::span<const double> plane, std::size_t height,
                                      std::size_t width);

// Writes abundance_<p>.pgm for every endmember; returns the paths.
std::vector<std::filesystem::path> export_abundance_maps(const UnmixResult& result,
                                                         const std::filesystem::path& dir);
void export_endmembers_csv(const UnmixResult& result, const std::filesystem::path& path);

// The ground-truth form of a result (endmembers transposed to P x L).
hsi::GroundTruth to_ground_truth(const UnmixResult& result);

// Flat object with keys permutation, sad_per_em, rmse_per_em, sad_avg,
// rmse_avg, runtime_s.
nlohmann::ordered_json report_to_json(const EvalReport& report);
EvalReport report_from_json(const nlohmann::json& j);
void export_report_json(const nlohmann::ordered_json& report, const std::filesystem::path& path);

}  // namespace dsanet::eval
