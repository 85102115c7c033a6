#include "dsanet/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "dsanet/error.hpp"

namespace dsanet::eval {

double sad_metric(std::span<const double> e, std::span<const double> ehat) {
  if (e.size() != ehat.size()) throw DimensionError("sad_metric: spectra differ in length");
  double dot = 0.0, ee = 0.0, hh = 0.0;
  for (std::size_t i = 0; i < e.size(); ++i) {
    dot += e[i] * ehat[i];
    ee += e[i] * e[i];
    hh += ehat[i] * ehat[i];
  }
  if (ee == 0.0 || hh == 0.0) throw DegenerateError("sad_metric: zero-norm spectrum");
  return std::acos(std::clamp(dot / (std::sqrt(ee) * std::sqrt(hh)), -1.0, 1.0));
}

double rmse_metric(std::span<const double> s, std::span<const double> shat) {
  if (s.size() != shat.size()) throw DimensionError("rmse_metric: lengths differ");
  if (s.empty()) throw DimensionError("rmse_metric: empty input");
  double total = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double d = s[i] - shat[i];
    total += d * d;
  }
  return std::sqrt(total / static_cast<double>(s.size()));
}

std::vector<std::size_t> match_endmembers(std::span<const double> est, std::span<const double> gt,
                                          std::size_t materials, std::size_t bands) {
  if (est.size() != materials * bands || gt.size() != materials * bands) {
    throw DimensionError("match_endmembers: matrices are not P x L");
  }
  if (materials == 0) throw DimensionError("match_endmembers: no endmembers");
  if (materials > kMaxMatchedEndmembers) {
    throw ConfigError("match_endmembers supports at most " +
                      std::to_string(kMaxMatchedEndmembers) + " endmembers, got " +
                      std::to_string(materials));
  }
  // cost[i][j] = SAD(gt row i, est column j)
  std::vector<double> cost(materials * materials);
  std::vector<double> column(bands);
  for (std::size_t j = 0; j < materials; ++j) {
    for (std::size_t l = 0; l < bands; ++l) column[l] = est[l * materials + j];
    for (std::size_t i = 0; i < materials; ++i)
      cost[i * materials + j] = sad_metric(gt.subspan(i * bands, bands), column);
  }
  std::vector<std::size_t> perm(materials);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::vector<std::size_t> best = perm;
  double best_cost = std::numeric_limits<double>::infinity();
  // next_permutation walks permutations in lexicographic order; the strict
  // comparison keeps the earliest one among ties.
  do {
    double c = 0.0;
    for (std::size_t i = 0; i < materials; ++i) c += cost[i * materials + perm[i]];
    if (c < best_cost) {
      best_cost = c;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

EvalReport evaluate(const UnmixResult& result, const hsi::GroundTruth& truth) {
  const std::size_t P = truth.materials, L = truth.bands;
  const std::size_t pixels = truth.height * truth.width;
  if (result.materials != P || result.bands != L || result.height != truth.height ||
      result.width != truth.width || result.endmembers.size() != L * P ||
      result.abundances.size() != pixels * P || truth.abundances.size() != pixels * P) {
    throw DimensionError("result and ground truth disagree in shape");
  }
  EvalReport report;
  report.permutation = match_endmembers(result.endmembers, truth.endmembers, P, L);
  std::vector<double> column(L), truth_plane(pixels), est_plane(pixels);
  for (std::size_t i = 0; i < P; ++i) {
    const std::size_t j = report.permutation[i];
    for (std::size_t l = 0; l < L; ++l) column[l] = result.endmembers[l * P + j];
    report.sad_per_em.push_back(sad_metric(truth.endmember(i), column));
    for (std::size_t n = 0; n < pixels; ++n) {
      truth_plane[n] = truth.abundances[n * P + i];
      est_plane[n] = result.abundances[n * P + j];
    }
    report.rmse_per_em.push_back(rmse_metric(truth_plane, est_plane));
  }
  report.sad_avg = std::accumulate(report.sad_per_em.begin(), report.sad_per_em.end(), 0.0) / P;
  report.rmse_avg = std::accumulate(report.rmse_per_em.begin(), report.rmse_per_em.end(), 0.0) / P;
  return report;
}

double uniform_baseline_rmse(const hsi::GroundTruth& truth) {
  const std::size_t P = truth.materials, pixels = truth.height * truth.width;
  std::vector<double> plane(pixels), uniform(pixels, 1.0 / static_cast<double>(P));
  double total = 0.0;
  for (std::size_t i = 0; i < P; ++i) {
    for (std::size_t n = 0; n < pixels; ++n) plane[n] = truth.abundances[n * P + i];
    total += rmse_metric(plane, uniform);
  }
  return total / static_cast<double>(P);
}

std::vector<unsigned char> encode_pgm(std::span<const double> plane, std::size_t height,
                                      std::size_t width) {
  if (plane.size() != height * width) throw DimensionError("PGM plane does not match H x W");
  const std::string header =
      "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  std::vector<unsigned char> out(header.begin(), header.end());
  out.reserve(header.size() + plane.size());
  for (double v : plane) {
    const double level = std::floor(255.0 * std::clamp(v, 0.0, 1.0) + 0.5);
    out.push_back(static_cast<unsigned char>(level));
  }
  return out;
}

std::vector<std::filesystem::path> export_abundance_maps(const UnmixResult& result,
                                                         const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const std::size_t pixels = result.height * result.width;
  std::vector<std::filesystem::path> written;
  std::vector<double> plane(pixels);
  for (std::size_t p = 0; p < result.materials; ++p) {
    for (std::size_t n = 0; n < pixels; ++n) plane[n] = result.abundances[n * result.materials + p];
    auto path = dir / ("abundance_" + std::to_string(p) + ".pgm");
    hsi::write_file(path, encode_pgm(plane, result.height, result.width));
    written.push_back(std::move(path));
  }
  return written;
}

hsi::GroundTruth to_ground_truth(const UnmixResult& result) {
  hsi::GroundTruth truth;
  truth.materials = result.materials;
  truth.bands = result.bands;
  truth.height = result.height;
  truth.width = result.width;
  truth.endmembers.resize(result.materials * result.bands);
  for (std::size_t p = 0; p < result.materials; ++p)
    for (std::size_t l = 0; l < result.bands; ++l)
      truth.endmembers[p * result.bands + l] = result.endmember(l, p);
  truth.abundances = result.abundances;
  return truth;
}

void export_endmembers_csv(const UnmixResult& result, const std::filesystem::path& path) {
  const hsi::GroundTruth t = to_ground_truth(result);
  hsi::save_endmembers_csv(t.endmembers, t.materials, t.bands, path);
}

nlohmann::ordered_json report_to_json(const EvalReport& report) {
  nlohmann::ordered_json j;
  j["permutation"] = report.permutation;
  j["sad_per_em"] = report.sad_per_em;
  j["rmse_per_em"] = report.rmse_per_em;
  j["sad_avg"] = report.sad_avg;
  j["rmse_avg"] = report.rmse_avg;
  j["runtime_s"] = report.runtime_s;
  return j;
}

EvalReport report_from_json(const nlohmann::json& j) {
  EvalReport r;
  try {
    r.permutation = j.at("permutation").get<std::vector<std::size_t>>();
    r.sad_per_em = j.at("sad_per_em").get<std::vector<double>>();
    r.rmse_per_em = j.at("rmse_per_em").get<std::vector<double>>();
    r.sad_avg = j.at("sad_avg").get<double>();
    r.rmse_avg = j.at("rmse_avg").get<double>();
    r.runtime_s = j.at("runtime_s").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed report: ") + e.what(), 0);
  }
  return r;
}

void export_report_json(const nlohmann::ordered_json& report, const std::filesystem::path& path) {
  const std::string text = report.dump(2) + "\n";
  hsi::write_file(path, {reinterpret_cast<const unsigned char*>(text.data()), text.size()});
}

}  // namespace dsanet::eval
