#include "dsanet/specview.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

#include "dsanet/error.hpp"
#include "dsanet/random.hpp"

namespace dsanet::specview {

std::size_t ViewPartition::band_count() const {
  std::size_t n = 0;
  for (const auto& v : views) n += v.size();
  return n;
}

BandCorrelation band_correlation(const hsi::Cube& cube, std::size_t sample_size,
                                 std::uint64_t seed) {
  hsi::validate(cube);
  if (cube.bands < 2) throw ConfigError("band correlation needs at least two bands");
  if (sample_size < 2) throw ConfigError("correlation sample must hold at least two pixels");

  const std::size_t pixels = cube.pixel_count();
  std::vector<std::size_t> sample(pixels);
  std::iota(sample.begin(), sample.end(), std::size_t{0});
  if (pixels > sample_size) {
    Rng rng(seed);
    for (std::size_t i = 0; i < sample_size; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng.below(pixels - i));
      std::swap(sample[i], sample[j]);
    }
    sample.resize(sample_size);
    std::sort(sample.begin(), sample.end());
  }

  const std::size_t L = cube.bands;
  const double n = static_cast<double>(sample.size());
  std::vector<double> mean(L, 0.0);
  // Constant bands are detected exactly; their rounded variance is not zero.
  std::vector<bool> varies(L, false);
  const auto first = cube.pixel(sample.front());
  for (std::size_t idx : sample) {
    auto px = cube.pixel(idx);
    for (std::size_t l = 0; l < L; ++l) {
      mean[l] += px[l];
      if (px[l] != first[l]) varies[l] = true;
    }
  }
  for (double& m : mean) m /= n;

  std::vector<double> cov(L * L, 0.0);
  std::vector<double> centered(L);
  for (std::size_t idx : sample) {
    auto px = cube.pixel(idx);
    for (std::size_t l = 0; l < L; ++l) centered[l] = px[l] - mean[l];
    for (std::size_t i = 0; i < L; ++i)
      for (std::size_t j = i; j < L; ++j) cov[i * L + j] += centered[i] * centered[j];
  }

  BandCorrelation corr{L, std::vector<double>(L * L, 0.0)};
  for (std::size_t i = 0; i < L; ++i) {
    corr.values[i * L + i] = 1.0;
    for (std::size_t j = i + 1; j < L; ++j) {
      const double vi = cov[i * L + i], vj = cov[j * L + j];
      double r = 0.0;
      if (varies[i] && varies[j] && vi > 0.0 && vj > 0.0) r = std::clamp(cov[i * L + j] / std::sqrt(vi * vj), -1.0, 1.0);
      corr.values[i * L + j] = r;
      corr.values[j * L + i] = r;
    }
  }
  return corr;
}

std::vector<std::size_t> cluster_bands(const BandCorrelation& corr, std::size_t clusters) {
  const std::size_t L = corr.bands;
  if (corr.values.size() != L * L) throw DimensionError("correlation matrix is not L x L");
  if (clusters < 1 || clusters > L) {
    throw ConfigError("cluster count M must lie in [1, " + std::to_string(L) + "], got " +
                      std::to_string(clusters));
  }

  // Active clusters, each identified by its smallest member band.
  std::vector<std::vector<std::size_t>> members(L);
  for (std::size_t b = 0; b < L; ++b) members[b] = {b};
  std::vector<double> dist(L * L);
  for (std::size_t i = 0; i < L; ++i)
    for (std::size_t j = 0; j < L; ++j) dist[i * L + j] = 1.0 - corr(i, j);
  std::vector<bool> active(L, true);

  for (std::size_t remaining = L; remaining > clusters; --remaining) {
    // Scanning i < j in index order with a strict '<' keeps the first pair
    // among equals, i.e. the one with the smallest minimum band index.
    std::size_t best_i = L, best_j = L;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < L; ++i) {
      if (!active[i]) continue;
      for (std::size_t j = i + 1; j < L; ++j) {
        if (!active[j]) continue;
        if (dist[i * L + j] < best || best_i == L) {
          best = dist[i * L + j];
          best_i = i;
          best_j = j;
        }
      }
    }
    // Average linkage update (Lance-Williams) into slot best_i.
    const double ni = static_cast<double>(members[best_i].size());
    const double nj = static_cast<double>(members[best_j].size());
    for (std::size_t k = 0; k < L; ++k) {
      if (!active[k] || k == best_i || k == best_j) continue;
      const double d = (ni * dist[k * L + best_i] + nj * dist[k * L + best_j]) / (ni + nj);
      dist[k * L + best_i] = d;
      dist[best_i * L + k] = d;
    }
    members[best_i].insert(members[best_i].end(), members[best_j].begin(), members[best_j].end());
    members[best_j].clear();
    active[best_j] = false;
  }

  // Slot index == smallest member band, so slots in order give labels
  // sorted by minimum band index.
  std::vector<std::size_t> labels(L);
  std::size_t next = 0;
  for (std::size_t i = 0; i < L; ++i) {
    if (!active[i]) continue;
    for (std::size_t b : members[i]) labels[b] = next;
    ++next;
  }
  return labels;
}

ViewPartition partition_views(std::span<const std::size_t> labels, std::size_t views) {
  const std::size_t L = labels.size();
  if (L == 0) throw ConfigError("cannot partition zero bands");
  if (views < 1 || views > L) {
    throw ConfigError("view count N must lie in [1, " + std::to_string(L) + "], got " +
                      std::to_string(views));
  }
  // Clusters ordered by their smallest band; members ascending.
  std::map<std::size_t, std::vector<std::size_t>> by_label;
  for (std::size_t b = 0; b < L; ++b) by_label[labels[b]].push_back(b);
  std::vector<std::vector<std::size_t>> groups;
  for (auto& [label, bands] : by_label) groups.push_back(std::move(bands));
  std::sort(groups.begin(), groups.end(),
            [](const auto& a, const auto& b) { return a.front() < b.front(); });

  ViewPartition partition;
  partition.clusters = groups.size();
  partition.cluster_of.assign(L, 0);
  partition.views.assign(views, {});
  // The dealing position carries over from one cluster to the next, so
  // small clusters do not all pile into view 0.
  std::size_t dealt = 0;
  for (std::size_t c = 0; c < groups.size(); ++c) {
    for (std::size_t b : groups[c]) {
      partition.cluster_of[b] = c;
      partition.views[dealt % views].push_back(b);
      ++dealt;
    }
  }
  for (auto& v : partition.views) std::sort(v.begin(), v.end());
  return partition;
}

std::vector<std::vector<double>> slice_views(std::span<const double> spectrum,
                                             const ViewPartition& partition) {
  if (spectrum.size() != partition.band_count()) {
    throw DimensionError("spectrum has " + std::to_string(spectrum.size()) +
                         " bands, partition covers " + std::to_string(partition.band_count()));
  }
  std::vector<std::vector<double>> out;
  out.reserve(partition.views.size());
  for (const auto& view : partition.views) {
    std::vector<double> slice;
    slice.reserve(view.size());
    for (std::size_t b : view) {
      if (b >= spectrum.size()) throw DimensionError("view band index out of range");
      slice.push_back(spectrum[b]);
    }
    out.push_back(std::move(slice));
  }
  return out;
}

void validate(const ViewPartition& partition) {
  const std::size_t L = partition.band_count();
  if (partition.views.empty() || L == 0) throw ConfigError("partition has no views");
  std::vector<bool> seen(L, false);
  for (std::size_t v = 0; v < partition.views.size(); ++v) {
    const auto& view = partition.views[v];
    if (view.empty()) throw ConfigError("view " + std::to_string(v) + " is empty");
    for (std::size_t i = 0; i < view.size(); ++i) {
      const std::size_t b = view[i];
      if (b >= L || seen[b]) {
        throw ConfigError("partition is not a bijection onto 0.." + std::to_string(L - 1));
      }
      if (i > 0 && view[i - 1] >= b) {
        throw ConfigError("view " + std::to_string(v) + " is not strictly ascending");
      }
      seen[b] = true;
    }
  }
  if (!partition.cluster_of.empty() && partition.cluster_of.size() != L) {
    throw ConfigError("cluster labels do not cover every band");
  }
}

std::string format_partition(const ViewPartition& partition) {
  validate(partition);
  std::ostringstream out;
  out << "# M=" << partition.clusters << " N=" << partition.views.size()
      << " L=" << partition.band_count() << '\n';
  for (const auto& view : partition.views) {
    for (std::size_t i = 0; i < view.size(); ++i) {
      if (i) out << ',';
      out << view[i];
    }
    out << '\n';
  }
  return out.str();
}

ViewPartition parse_partition(const std::string& text) {
  std::istringstream in(text);
  std::string header;
  if (!std::getline(in, header)) throw ParseError("empty partition file", 0);
  std::size_t M = 0, N = 0, L = 0;
  {
    std::istringstream h(header);
    std::string hash, m, n, l;
    h >> hash >> m >> n >> l;
    auto field = [&](const std::string& token, const char* key) -> std::size_t {
      const std::string prefix = std::string(key) + "=";
      if (token.rfind(prefix, 0) != 0) {
        throw ParseError("partition header must read \"# M=<M> N=<N> L=<L>\"", 0);
      }
      try {
        std::size_t used = 0;
        const unsigned long long v = std::stoull(token.substr(prefix.size()), &used);
        if (used != token.size() - prefix.size()) throw std::invalid_argument(token);
        return static_cast<std::size_t>(v);
      } catch (const std::logic_error&) {
        throw ParseError("bad partition header field '" + token + "'", 0);
      }
    };
    if (hash != "#") throw ParseError("partition header must start with '#'", 0);
    M = field(m, "M");
    N = field(n, "N");
    L = field(l, "L");
  }
  ViewPartition partition;
  partition.clusters = M;
  std::size_t offset = header.size() + 1;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) {
      offset += 1;
      continue;
    }
    std::vector<std::size_t> view;
    std::istringstream fields(line);
    std::string token;
    while (std::getline(fields, token, ',')) {
      if (token.empty() || token.find_first_not_of("0123456789") != std::string::npos) {
        throw ParseError("bad band index '" + token + "'", offset);
      }
      view.push_back(static_cast<std::size_t>(std::stoull(token)));
    }
    partition.views.push_back(std::move(view));
    offset += line.size() + 1;
  }
  if (partition.views.size() != N) {
    throw ParseError("header announces " + std::to_string(N) + " views, found " +
                         std::to_string(partition.views.size()),
                     offset);
  }
  if (partition.band_count() != L) {
    throw ParseError("header announces L=" + std::to_string(L) + ", views cover " +
                         std::to_string(partition.band_count()) + " bands",
                     offset);
  }
  try {
    validate(partition);
  } catch (const ConfigError& e) {
    throw ParseError(e.what(), header.size() + 1);
  }
  return partition;
}

void save_partition(const ViewPartition& partition, const std::filesystem::path& path) {
  const std::string text = format_partition(partition);
  hsi::write_file(path, {reinterpret_cast<const unsigned char*>(text.data()), text.size()});
}

ViewPartition load_partition(const std::filesystem::path& path) {
  const auto bytes = hsi::read_file(path);
  return parse_partition(std::string(bytes.begin(), bytes.end()));
}

}  // namespace dsanet::specview
