#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "dsanet/error.hpp"
#include "dsanet/specview.hpp"
#include "support.hpp"

using namespace dsanet;
using specview::BandCorrelation;

namespace {

BandCorrelation block_correlation(const std::vector<std::size_t>& block_of) {
  const std::size_t L = block_of.size();
  BandCorrelation corr{L, std::vector<double>(L * L, 0.0)};
  for (std::size_t i = 0; i < L; ++i)
    for (std::size_t j = 0; j < L; ++j) corr.values[i * L + j] = block_of[i] == block_of[j] ? 1.0 : 0.0;
  return corr;
}

// Random symmetric correlation-like matrix with unit diagonal.
BandCorrelation random_correlation(Rng& rng, std::size_t L) {
  BandCorrelation corr{L, std::vector<double>(L * L, 1.0)};
  for (std::size_t i = 0; i < L; ++i)
    for (std::size_t j = i + 1; j < L; ++j) {
      const double v = rng.uniform(-1.0, 1.0);
      corr.values[i * L + j] = v;
      corr.values[j * L + i] = v;
    }
  return corr;
}

// Labels compared up to renaming: same[i][j] iff bands i and j share a cluster.
bool same_grouping(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a.size(); ++j)
      if ((a[i] == a[j]) != (b[i] == b[j])) return false;
  return true;
}

}  // namespace

TEST_CASE("band correlation") {
  Rng rng(1);
  SUBCASE("diagonal, symmetry, range") {
    const auto cube = testing::random_cube(rng, 10, 10, 6);
    const auto corr = specview::band_correlation(cube, 10000, 3);
    for (std::size_t i = 0; i < 6; ++i) {
      CHECK(corr(i, i) == doctest::Approx(1.0).epsilon(1e-12));
      for (std::size_t j = 0; j < 6; ++j) {
        CHECK(corr(i, j) == corr(j, i));
        CHECK(std::abs(corr(i, j)) <= 1.0);
      }
    }
  }
  SUBCASE("anti-correlated and constant bands") {
    hsi::Cube cube{20, 1, 3, {}};
    for (std::size_t i = 0; i < 20; ++i) {
      const double b = rng.uniform(0.0, 1.0);
      cube.values.insert(cube.values.end(), {b, 2.0 - b, 0.7});
    }
    const auto corr = specview::band_correlation(cube, 10000, 0);
    CHECK(corr(0, 1) == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(corr(0, 2) == 0.0);
    CHECK(corr(2, 1) == 0.0);
    CHECK(corr(2, 2) == 1.0);
  }
  SUBCASE("independent bands are nearly uncorrelated") {
    const auto cube = testing::random_cube(rng, 100, 100, 2);
    const auto corr = specview::band_correlation(cube, 10000, 5);
    CHECK(std::abs(corr(0, 1)) < 0.05);
  }
  SUBCASE("subsampling is seeded") {
    const auto cube = testing::random_cube(rng, 30, 30, 4);
    const auto a = specview::band_correlation(cube, 100, 9);
    const auto b = specview::band_correlation(cube, 100, 9);
    const auto c = specview::band_correlation(cube, 100, 10);
    CHECK(a.values == b.values);
    CHECK(a.values != c.values);
  }
  SUBCASE("preconditions") {
    const auto one_band = testing::random_cube(rng, 4, 4, 1);
    CHECK_THROWS_AS(specview::band_correlation(one_band, 100, 0), ConfigError);
  }
}

TEST_CASE("cluster_bands") {
  Rng rng(2);
  const auto corr = random_correlation(rng, 9);
  const auto singletons = specview::cluster_bands(corr, 9);
  std::vector<std::size_t> expect(9);
  std::iota(expect.begin(), expect.end(), std::size_t{0});
  CHECK(singletons == expect);
  const auto one = specview::cluster_bands(corr, 1);
  CHECK(std::all_of(one.begin(), one.end(), [](std::size_t l) { return l == 0; }));

  const auto blocks = specview::cluster_bands(block_correlation({0, 0, 0, 1, 1}), 2);
  CHECK(blocks == std::vector<std::size_t>{0, 0, 0, 1, 1});

  CHECK_THROWS_AS(specview::cluster_bands(corr, 0), ConfigError);
  CHECK_THROWS_AS(specview::cluster_bands(corr, 10), ConfigError);

  SUBCASE("labels are numbered by smallest member band") {
    const auto labels = specview::cluster_bands(block_correlation({1, 0, 1, 0, 2, 2}), 3);
    CHECK(labels == std::vector<std::size_t>{0, 1, 0, 1, 2, 2});
  }
  SUBCASE("permutation equivariance") {
    for (int trial = 0; trial < 50; ++trial) {
      const std::size_t L = 3 + rng.below(12);
      const auto c = random_correlation(rng, L);
      const std::size_t M = 1 + rng.below(L);
      std::vector<std::size_t> perm(L);
      std::iota(perm.begin(), perm.end(), std::size_t{0});
      rng.shuffle(std::span<std::size_t>(perm));
      BandCorrelation permuted{L, std::vector<double>(L * L)};
      for (std::size_t i = 0; i < L; ++i)
        for (std::size_t j = 0; j < L; ++j) permuted.values[perm[i] * L + perm[j]] = c(i, j);
      const auto base = specview::cluster_bands(c, M);
      const auto moved = specview::cluster_bands(permuted, M);
      std::vector<std::size_t> back(L);
      for (std::size_t i = 0; i < L; ++i) back[i] = moved[perm[i]];
      CHECK(same_grouping(base, back));
    }
  }
  SUBCASE("recovers noisy blocks from a cube") {
    // Bands 0-3 follow one latent image, 4-7 another.
    hsi::Cube cube{30, 30, 8, {}};
    for (std::size_t i = 0; i < 900; ++i) {
      const double a = rng.uniform(), b = rng.uniform();
      for (int l = 0; l < 4; ++l) cube.values.push_back(a + 0.01 * rng.uniform());
      for (int l = 0; l < 4; ++l) cube.values.push_back(b + 0.01 * rng.uniform());
    }
    const auto labels = specview::cluster_bands(specview::band_correlation(cube, 10000, 0), 2);
    CHECK(labels == std::vector<std::size_t>{0, 0, 0, 0, 1, 1, 1, 1});
  }
}

TEST_CASE("partition_views") {
  std::vector<std::size_t> all(7);
  std::iota(all.begin(), all.end(), std::size_t{0});
  const auto single = specview::partition_views(std::vector<std::size_t>{2, 0, 1, 1, 0, 2, 2}, 1);
  REQUIRE(single.view_count() == 1);
  CHECK(single.views[0] == all);

  const auto two = specview::partition_views(std::vector<std::size_t>{0, 0, 0, 0, 1, 1}, 2);
  CHECK(two.views[0] == std::vector<std::size_t>{0, 2, 4});
  CHECK(two.views[1] == std::vector<std::size_t>{1, 3, 5});

  const auto three = specview::partition_views(std::vector<std::size_t>(10, 0), 3);
  CHECK(three.views[0].size() == 4);
  CHECK(three.views[1].size() == 3);
  CHECK(three.views[2].size() == 3);

  CHECK_THROWS_AS(specview::partition_views(std::vector<std::size_t>(4, 0), 0), ConfigError);
  CHECK_THROWS_AS(specview::partition_views(std::vector<std::size_t>(4, 0), 5), ConfigError);

  SUBCASE("every view is nonempty even with many small clusters") {
    // Four singleton clusters dealt over four views.
    const auto p = specview::partition_views(std::vector<std::size_t>{0, 1, 2, 3}, 4);
    for (const auto& v : p.views) CHECK(v.size() == 1);
    CHECK_NOTHROW(specview::validate(p));
  }
}

TEST_CASE("slice_views") {
  const auto p = specview::partition_views(std::vector<std::size_t>{0, 0, 1, 1, 1, 0}, 2);
  std::vector<double> tags{0, 1, 2, 3, 4, 5};
  const auto slices = specview::slice_views(tags, p);
  REQUIRE(slices.size() == 2);
  for (std::size_t v = 0; v < 2; ++v) {
    std::vector<double> expect(p.views[v].begin(), p.views[v].end());
    CHECK(slices[v] == expect);
  }
  const auto identity = specview::slice_views(tags, specview::partition_views(std::vector<std::size_t>(6, 0), 1));
  CHECK(identity.front() == tags);
  CHECK_THROWS_AS(specview::slice_views(std::vector<double>(5, 1.0), p), DimensionError);

  Rng rng(4);
  std::vector<double> spectrum(6);
  for (double& x : spectrum) x = rng.uniform();
  const auto parts = specview::slice_views(spectrum, p);
  std::vector<double> rebuilt(6, -1.0);
  for (std::size_t v = 0; v < 2; ++v)
    for (std::size_t i = 0; i < parts[v].size(); ++i) rebuilt[p.views[v][i]] = parts[v][i];
  CHECK(rebuilt == spectrum);
}

TEST_CASE("partition file format") {
  const auto p = specview::partition_views(std::vector<std::size_t>{0, 0, 1, 1, 1}, 2);
  const std::string text = specview::format_partition(p);
  CHECK(text == "# M=2 N=2 L=5\n0,2,4\n1,3\n");
  const auto back = specview::parse_partition(text);
  CHECK(back.clusters == 2);
  CHECK(back.views == p.views);
  CHECK(back.cluster_of.empty());
  CHECK(specview::format_partition(back) == text);

  testing::TempDir dir("partition");
  specview::save_partition(p, dir / "p.txt");
  CHECK(specview::load_partition(dir / "p.txt").views == p.views);

  CHECK_THROWS_AS(specview::parse_partition(""), ParseError);
  CHECK_THROWS_AS(specview::parse_partition("M=2 N=2 L=5\n0,2,4\n1,3\n"), ParseError);
  CHECK_THROWS_AS(specview::parse_partition("# M=2 N=3 L=5\n0,2,4\n1,3\n"), ParseError);
  CHECK_THROWS_AS(specview::parse_partition("# M=2 N=2 L=5\n0,2,4\n1,3,3\n"), ParseError);
  CHECK_THROWS_AS(specview::parse_partition("# M=2 N=2 L=5\n0,4,2\n1,3\n"), ParseError);
  try {
    specview::parse_partition("# M=2 N=2 L=5\n0,2,4\n1,x\n");
    FAIL("no error");
  } catch (const ParseError& e) {
    CHECK(e.offset() == 20);  // start of the second view line
  }
}

TEST_CASE("partition invariants over random cases") {
  Rng rng(77);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t L = 1 + rng.below(256);
    const std::size_t M = 1 + rng.below(std::min<std::size_t>(8, L));
    const std::size_t N = 1 + rng.below(std::min<std::size_t>(8, L));
    std::vector<std::size_t> labels(L);
    for (auto& l : labels) l = rng.below(M);
    const auto p = specview::partition_views(labels, N);
    CHECK_NOTHROW(specview::validate(p));

    std::vector<std::size_t> all;
    for (const auto& v : p.views) {
      CHECK(std::is_sorted(v.begin(), v.end()));
      CHECK(std::adjacent_find(v.begin(), v.end()) == v.end());
      all.insert(all.end(), v.begin(), v.end());
    }
    std::sort(all.begin(), all.end());
    std::vector<std::size_t> expect(L);
    std::iota(expect.begin(), expect.end(), std::size_t{0});
    CHECK(all == expect);

    for (std::size_t c = 0; c < M; ++c) {
      const std::size_t size = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), c));
      for (const auto& v : p.views) {
        const std::size_t n = static_cast<std::size_t>(
            std::count_if(v.begin(), v.end(), [&](std::size_t b) { return labels[b] == c; }));
        CHECK(n >= size / N);
        CHECK(n <= (size + N - 1) / N);
      }
    }
  }
}
